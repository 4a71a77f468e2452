#include "udparse/cli.hpp"

int main(int argc, char** argv) { return udparse::run_cli(argc, argv); }
