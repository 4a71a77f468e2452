// Per-subword context vectors. The pretrained encoder is replaced by two
// deterministic backends: a seeded pseudo-random one for self-contained
// experiments and a file-loaded table for externally computed vectors.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <istream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/rng.hpp"
#include "udparse/util.hpp"

namespace udparse {

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;

  virtual int dim() const = 0;

  // One row per subword, in order. Deterministic: the same (subwords,
  // sent_id, provider configuration) always yields the same matrix.
  virtual Eigen::MatrixXd embed(std::span<const std::string> subwords,
                                std::string_view sent_id) const = 0;
};

// Vector entries come from a seeded hash of (subword string, position,
// dimension index), mapped to a uniform value in [-0.5, 0.5]. Sensitive to
// token identity and order, needs no external assets.
class PseudoRandomProvider final : public EmbeddingProvider {
 public:
  PseudoRandomProvider(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    if (dim <= 0) throw DataError("embedding dimension must be positive");
  }

  int dim() const override { return dim_; }

  Eigen::MatrixXd embed(std::span<const std::string> subwords,
                        std::string_view /*sent_id*/) const override {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(subwords.size()), dim_);
    for (std::size_t pos = 0; pos < subwords.size(); ++pos) {
      const std::uint64_t piece_hash = hash_bytes(subwords[pos]);
      for (int d = 0; d < dim_; ++d) {
        std::uint64_t x = mix64(seed_ ^ piece_hash);
        x = mix64(x ^ (pos + 1));
        x = mix64(x ^ static_cast<std::uint64_t>(d));
        out(static_cast<Eigen::Index>(pos), d) = unit_from_bits(x) - 0.5;
      }
    }
    return out;
  }

 private:
  std::uint64_t seed_;
  int dim_;
};

// Table keyed by (sent_id, subword position). File layout:
//   EMB v1 dim=D count=K
//   sent_id index v1 ... vD        (one record per line, index 1-based)
class FileTableProvider final : public EmbeddingProvider {
 public:
  static FileTableProvider parse(std::istream& in) {
    FileTableProvider provider;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("embedding table has no header");
    ++lineno;
    std::vector<std::string> head = split_ws(line);
    if (head.size() != 4 || head[0] != "EMB" || head[1] != "v1" ||
        head[2].substr(0, 4) != "dim=" || head[3].substr(0, 6) != "count=") {
      throw ParseError(lineno, "bad embedding table header: \"" + line + "\"");
    }
    provider.dim_ = static_cast<int>(parse_integer(std::string_view(head[2]).substr(4), lineno));
    const long long count = parse_integer(std::string_view(head[3]).substr(6), lineno);
    if (provider.dim_ <= 0) throw ParseError(lineno, "embedding dim must be positive");

    long long records = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string_view body = trim(line);
      if (body.empty()) continue;
      std::vector<std::string> fields = split_ws(body);
      if (fields.size() != static_cast<std::size_t>(provider.dim_) + 2) {
        throw ParseError(lineno, "record has " + std::to_string(fields.size() - 2) +
                                     " values, header says dim=" +
                                     std::to_string(provider.dim_));
      }
      const std::string& sent_id = fields[0];
      const long long index = parse_integer(fields[1], lineno);
      if (index < 1) throw ParseError(lineno, "subword index must be >= 1");
      Eigen::VectorXd v(provider.dim_);
      for (int d = 0; d < provider.dim_; ++d) {
        v(d) = parse_double(fields[static_cast<std::size_t>(d) + 2], lineno);
      }
      auto& rows = provider.table_[sent_id];
      if (rows.size() < static_cast<std::size_t>(index)) rows.resize(static_cast<std::size_t>(index));
      rows[static_cast<std::size_t>(index) - 1] = {true, std::move(v)};
      ++records;
    }
    if (records != count) {
      throw ParseError("embedding table header says count=" + std::to_string(count) +
                       " but " + std::to_string(records) + " records were read");
    }
    return provider;
  }

  static FileTableProvider load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open embedding table: " + path);
    return parse(in);
  }

  int dim() const override { return dim_; }

  Eigen::MatrixXd embed(std::span<const std::string> subwords,
                        std::string_view sent_id) const override {
    auto it = table_.find(std::string(sent_id));
    Eigen::MatrixXd out(static_cast<Eigen::Index>(subwords.size()), dim_);
    for (std::size_t pos = 0; pos < subwords.size(); ++pos) {
      const bool have = it != table_.end() && pos < it->second.size() &&
                        it->second[pos].first;
      if (!have) {
        throw DataError("embedding table has no vector for sentence \"" +
                        std::string(sent_id) + "\" position " +
                        std::to_string(pos + 1));
      }
      out.row(static_cast<Eigen::Index>(pos)) = it->second[pos].second.transpose();
    }
    return out;
  }

 private:
  int dim_ = 0;
  std::unordered_map<std::string, std::vector<std::pair<bool, Eigen::VectorXd>>> table_;
};

inline std::shared_ptr<EmbeddingProvider> load_embedding_file(const std::string& path) {
  return std::make_shared<FileTableProvider>(FileTableProvider::load(path));
}

// Writes one record per subword of each (sent_id, matrix) pair.
inline void write_embedding_file(
    std::ostream& out,
    const std::vector<std::pair<std::string, Eigen::MatrixXd>>& records) {
  long long count = 0;
  int dim = 0;
  for (const auto& [id, mat] : records) {
    count += mat.rows();
    dim = static_cast<int>(mat.cols());
  }
  out << "EMB v1 dim=" << dim << " count=" << count << '\n';
  for (const auto& [id, mat] : records) {
    for (Eigen::Index r = 0; r < mat.rows(); ++r) {
      out << id << ' ' << (r + 1);
      for (Eigen::Index c = 0; c < mat.cols(); ++c) {
        out << ' ' << format_double(mat(r, c));
      }
      out << '\n';
    }
  }
}

}  // namespace udparse
