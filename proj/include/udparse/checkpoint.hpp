// Checkpoint files: a versioned, self-describing table of named parameter
// tensors. Values are written as shortest round-trip decimals, so
// save/load reproduces every double bit for bit.
#pragma once

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/scorer.hpp"
#include "udparse/util.hpp"

namespace udparse {

inline void save_checkpoint(std::ostream& out, const BiaffineParams& params) {
  out << "UDPARSE-CKPT v1\n";
  out << "input_dim " << params.config.input_dim << '\n';
  out << "arc_dim " << params.config.arc_dim << '\n';
  out << "label_dim " << params.config.label_dim << '\n';
  out << "labels " << params.labels.size() << '\n';
  for (const std::string& label : params.labels) out << "label " << label << '\n';
  for (const auto& [name, tensor] : tensor_views(params)) {
    out << "tensor " << name << ' ' << tensor->rows() << ' ' << tensor->cols() << '\n';
    for (Eigen::Index r = 0; r < tensor->rows(); ++r) {
      for (Eigen::Index c = 0; c < tensor->cols(); ++c) {
        if (c) out << ' ';
        out << format_double((*tensor)(r, c));
      }
      out << '\n';
    }
  }
  out << "end\n";
}

inline void save_checkpoint(const std::string& path, const BiaffineParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  save_checkpoint(out, params);
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

inline BiaffineParams load_checkpoint(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line)) throw ParseError(lineno, "unexpected end of checkpoint");
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  if (next_line() != "UDPARSE-CKPT v1") {
    throw ParseError(lineno, "not a checkpoint file (bad magic line)");
  }
  auto read_scalar = [&](std::string_view key) -> long long {
    std::vector<std::string> fields = split_ws(next_line());
    if (fields.size() != 2 || fields[0] != key) {
      throw ParseError(lineno, "expected \"" + std::string(key) + " <value>\"");
    }
    return parse_integer(fields[1], lineno);
  };

  BiaffineConfig config;
  config.input_dim = static_cast<int>(read_scalar("input_dim"));
  config.arc_dim = static_cast<int>(read_scalar("arc_dim"));
  config.label_dim = static_cast<int>(read_scalar("label_dim"));
  const long long label_count = read_scalar("labels");

  std::vector<std::string> labels;
  for (long long i = 0; i < label_count; ++i) {
    std::string& l = next_line();
    if (l.rfind("label ", 0) != 0) throw ParseError(lineno, "expected a label line");
    labels.push_back(l.substr(6));
  }

  BiaffineParams params = init_params(config, std::move(labels), 0);
  for (auto& [name, tensor] : tensor_views(params)) {
    std::vector<std::string> head = split_ws(next_line());
    if (head.size() != 4 || head[0] != "tensor" || head[1] != name) {
      throw ParseError(lineno, "expected tensor \"" + name + "\"");
    }
    const long long rows = parse_integer(head[2], lineno);
    const long long cols = parse_integer(head[3], lineno);
    if (rows != tensor->rows() || cols != tensor->cols()) {
      throw ParseError(lineno, "tensor \"" + name + "\" has shape " + head[2] + "x" +
                                   head[3] + ", expected " + std::to_string(tensor->rows()) +
                                   "x" + std::to_string(tensor->cols()));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      std::vector<std::string> values = split_ws(next_line());
      if (static_cast<long long>(values.size()) != cols) {
        throw ParseError(lineno, "tensor \"" + name + "\" row has " +
                                     std::to_string(values.size()) + " values, expected " +
                                     std::to_string(cols));
      }
      for (Eigen::Index c = 0; c < cols; ++c) {
        (*tensor)(r, c) = parse_double(values[static_cast<std::size_t>(c)], lineno);
      }
    }
  }
  if (next_line() != "end") throw ParseError(lineno, "missing \"end\" marker");
  return params;
}

inline BiaffineParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  return load_checkpoint(in);
}

}  // namespace udparse
