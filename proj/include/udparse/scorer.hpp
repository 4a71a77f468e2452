// Deep biaffine scoring of arcs and labels over pooled word vectors.
//
// Each side (head, dependent) is projected through a single affine layer
// with ReLU activation. Arc scores combine the ReLU outputs through a
// bias-augmented bilinear form (the head side carries the bias); label
// scores use one bilinear form per label, bias-augmented on both sides.
// The ROOT position is a learned vector of the input dimensionality.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "udparse/error.hpp"
#include "udparse/rng.hpp"
#include "udparse/scores.hpp"

namespace udparse {

struct BiaffineConfig {
  int input_dim = 0;
  int arc_dim = 400;
  int label_dim = 100;
};

struct BiaffineParams {
  BiaffineConfig config;
  std::vector<std::string> labels;

  Eigen::MatrixXd arc_head_weight, arc_head_bias;      // a x D, a x 1
  Eigen::MatrixXd arc_dep_weight, arc_dep_bias;        // a x D, a x 1
  Eigen::MatrixXd arc_bilinear;                        // (a+1) x a
  Eigen::MatrixXd label_head_weight, label_head_bias;  // l x D, l x 1
  Eigen::MatrixXd label_dep_weight, label_dep_bias;    // l x D, l x 1
  std::vector<Eigen::MatrixXd> label_bilinear;         // per label, (l+1) x (l+1)
  Eigen::MatrixXd root_embedding;                      // D x 1

  int label_count() const { return static_cast<int>(labels.size()); }
};

// Projection weights start at uniform fan-in scale, bilinear weights at
// zero, so the initial score matrix is exactly zero and the normalized
// distribution starts uniform.
inline BiaffineParams init_params(const BiaffineConfig& config,
                                  std::vector<std::string> labels,
                                  std::uint64_t seed) {
  if (config.input_dim <= 0 || config.arc_dim <= 0 || config.label_dim <= 0) {
    throw DataError("biaffine dimensions must be positive");
  }
  if (labels.empty()) throw DataError("label inventory is empty");

  BiaffineParams p;
  p.config = config;
  p.labels = std::move(labels);
  SplitMix64 rng(seed);
  auto fan_in_uniform = [&rng](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.next_in(-scale, scale);
    }
    return m;
  };

  const int D = config.input_dim, a = config.arc_dim, l = config.label_dim;
  p.arc_head_weight = fan_in_uniform(a, D);
  p.arc_head_bias = Eigen::MatrixXd::Zero(a, 1);
  p.arc_dep_weight = fan_in_uniform(a, D);
  p.arc_dep_bias = Eigen::MatrixXd::Zero(a, 1);
  p.arc_bilinear = Eigen::MatrixXd::Zero(a + 1, a);
  p.label_head_weight = fan_in_uniform(l, D);
  p.label_head_bias = Eigen::MatrixXd::Zero(l, 1);
  p.label_dep_weight = fan_in_uniform(l, D);
  p.label_dep_bias = Eigen::MatrixXd::Zero(l, 1);
  p.label_bilinear.assign(p.labels.size(), Eigen::MatrixXd::Zero(l + 1, l + 1));
  p.root_embedding = Eigen::MatrixXd(D, 1);
  for (int d = 0; d < D; ++d) p.root_embedding(d, 0) = rng.next_in(-0.5, 0.5);
  return p;
}

inline BiaffineParams zero_like(const BiaffineParams& p) {
  BiaffineParams z = p;
  z.arc_head_weight.setZero();
  z.arc_head_bias.setZero();
  z.arc_dep_weight.setZero();
  z.arc_dep_bias.setZero();
  z.arc_bilinear.setZero();
  z.label_head_weight.setZero();
  z.label_head_bias.setZero();
  z.label_dep_weight.setZero();
  z.label_dep_bias.setZero();
  for (auto& m : z.label_bilinear) m.setZero();
  z.root_embedding.setZero();
  return z;
}

// All parameter tensors in a fixed order. The checkpoint format, the
// optimizer, and gradient checks iterate this list.
inline std::vector<std::pair<std::string, Eigen::MatrixXd*>> tensor_views(
    BiaffineParams& p) {
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> views = {
      {"arc_head.weight", &p.arc_head_weight},
      {"arc_head.bias", &p.arc_head_bias},
      {"arc_dep.weight", &p.arc_dep_weight},
      {"arc_dep.bias", &p.arc_dep_bias},
      {"arc_bilinear", &p.arc_bilinear},
      {"label_head.weight", &p.label_head_weight},
      {"label_head.bias", &p.label_head_bias},
      {"label_dep.weight", &p.label_dep_weight},
      {"label_dep.bias", &p.label_dep_bias},
  };
  for (std::size_t r = 0; r < p.label_bilinear.size(); ++r) {
    views.emplace_back("label_bilinear." + std::to_string(r), &p.label_bilinear[r]);
  }
  views.emplace_back("root_embedding", &p.root_embedding);
  return views;
}

inline std::vector<std::pair<std::string, const Eigen::MatrixXd*>> tensor_views(
    const BiaffineParams& p) {
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> views;
  for (auto& [name, tensor] : tensor_views(const_cast<BiaffineParams&>(p))) {
    views.emplace_back(name, tensor);
  }
  return views;
}

namespace detail {

// rows(X W^T + 1 b^T), ReLU'd; pre-activation kept for backprop.
inline void affine_relu(const Eigen::MatrixXd& input, const Eigen::MatrixXd& weight,
                        const Eigen::MatrixXd& bias, Eigen::MatrixXd& pre,
                        Eigen::MatrixXd& act) {
  pre = input * weight.transpose();
  pre.rowwise() += bias.col(0).transpose();
  act = pre.cwiseMax(0.0);
}

inline Eigen::MatrixXd with_ones_column(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out(m.rows(), m.cols() + 1);
  out.leftCols(m.cols()) = m;
  out.col(m.cols()).setOnes();
  return out;
}

inline void check_input(const Eigen::MatrixXd& word_vectors,
                        const BiaffineParams& params) {
  if (word_vectors.rows() < 1) throw DataError("scoring needs at least one word");
  if (word_vectors.cols() != params.config.input_dim) {
    throw DataError("word vectors have dimension " +
                    std::to_string(word_vectors.cols()) + ", parameters expect " +
                    std::to_string(params.config.input_dim));
  }
}

}  // namespace detail

// Forward state kept around for backpropagation.
struct ArcTrace {
  Eigen::MatrixXd input;               // (n+1) x D, row 0 = root embedding
  Eigen::MatrixXd head_pre, head_act;  // (n+1) x a
  Eigen::MatrixXd dep_pre, dep_act;    // n x a
  ScoreMatrix scores;
};

struct LabelTrace {
  Eigen::MatrixXd head_pre, head_act;  // (n+1) x l
  Eigen::MatrixXd dep_pre, dep_act;    // n x l
  LabelScores scores;
};

inline ArcTrace arc_forward(const Eigen::MatrixXd& word_vectors,
                            const BiaffineParams& params) {
  detail::check_input(word_vectors, params);
  const int n = static_cast<int>(word_vectors.rows());

  ArcTrace trace;
  trace.input.resize(n + 1, params.config.input_dim);
  trace.input.row(0) = params.root_embedding.col(0).transpose();
  trace.input.bottomRows(n) = word_vectors;

  detail::affine_relu(trace.input, params.arc_head_weight, params.arc_head_bias,
                      trace.head_pre, trace.head_act);
  detail::affine_relu(word_vectors, params.arc_dep_weight, params.arc_dep_bias,
                      trace.dep_pre, trace.dep_act);

  const Eigen::MatrixXd head_aug = detail::with_ones_column(trace.head_act);
  Eigen::MatrixXd raw = head_aug * params.arc_bilinear * trace.dep_act.transpose();
  trace.scores = ScoreMatrix::from_matrix(std::move(raw));
  for (int c = 1; c <= n; ++c) trace.scores.at(c, c) = kNegInf;
  return trace;
}

inline ScoreMatrix arc_scores(const Eigen::MatrixXd& word_vectors,
                              const BiaffineParams& params) {
  return arc_forward(word_vectors, params).scores;
}

inline LabelTrace label_forward(const Eigen::MatrixXd& word_vectors,
                                const BiaffineParams& params) {
  detail::check_input(word_vectors, params);
  const int n = static_cast<int>(word_vectors.rows());

  LabelTrace trace;
  Eigen::MatrixXd input(n + 1, params.config.input_dim);
  input.row(0) = params.root_embedding.col(0).transpose();
  input.bottomRows(n) = word_vectors;

  detail::affine_relu(input, params.label_head_weight, params.label_head_bias,
                      trace.head_pre, trace.head_act);
  detail::affine_relu(word_vectors, params.label_dep_weight, params.label_dep_bias,
                      trace.dep_pre, trace.dep_act);

  const Eigen::MatrixXd head_aug = detail::with_ones_column(trace.head_act);
  const Eigen::MatrixXd dep_aug = detail::with_ones_column(trace.dep_act);
  trace.scores = LabelScores(n, params.label_count());
  for (int r = 0; r < params.label_count(); ++r) {
    Eigen::MatrixXd table = head_aug * params.label_bilinear[static_cast<std::size_t>(r)] *
                            dep_aug.transpose();
    for (int h = 0; h <= n; ++h) {
      for (int c = 1; c <= n; ++c) {
        trace.scores.at(h, c, r) = (h == c) ? kNegInf : table(h, c - 1);
      }
    }
  }
  return trace;
}

inline LabelScores label_scores(const Eigen::MatrixXd& word_vectors,
                                const BiaffineParams& params) {
  return label_forward(word_vectors, params).scores;
}

// Accumulates the gradient of some scalar objective into `grad`, given its
// gradient `dscores` with respect to the raw arc scores. Masked cells
// (head == dependent) must carry zero in dscores.
inline void arc_backward(const ArcTrace& trace, const BiaffineParams& params,
                         const Eigen::MatrixXd& dscores, BiaffineParams& grad) {
  const Eigen::Index n = trace.dep_act.rows();
  const Eigen::MatrixXd head_aug = detail::with_ones_column(trace.head_act);

  grad.arc_bilinear += head_aug.transpose() * dscores * trace.dep_act;

  const Eigen::MatrixXd dhead_aug = dscores * trace.dep_act * params.arc_bilinear.transpose();
  const Eigen::MatrixXd ddep = dscores.transpose() * head_aug * params.arc_bilinear;

  Eigen::MatrixXd dhead_pre =
      dhead_aug.leftCols(trace.head_act.cols()).cwiseProduct(
          (trace.head_pre.array() > 0.0).cast<double>().matrix());
  Eigen::MatrixXd ddep_pre =
      ddep.cwiseProduct((trace.dep_pre.array() > 0.0).cast<double>().matrix());

  grad.arc_head_weight += dhead_pre.transpose() * trace.input;
  grad.arc_head_bias.col(0) += dhead_pre.colwise().sum().transpose();
  grad.arc_dep_weight += ddep_pre.transpose() * trace.input.bottomRows(n);
  grad.arc_dep_bias.col(0) += ddep_pre.colwise().sum().transpose();

  // Word vectors are frozen provider outputs; only the ROOT row of the
  // input is a parameter.
  grad.root_embedding.col(0) +=
      (dhead_pre.row(0) * params.arc_head_weight).transpose();
}

// Gradient of the objective with respect to one arc's label scores.
struct LabelArcGrad {
  int head = 0;
  int dep = 0;
  Eigen::VectorXd dscores;  // one entry per label
};

inline void label_backward(const LabelTrace& trace, const BiaffineParams& params,
                           std::span<const LabelArcGrad> arcs,
                           const Eigen::MatrixXd& word_vectors,
                           BiaffineParams& grad) {
  const Eigen::Index n = trace.dep_act.rows();
  const int l = params.config.label_dim;
  Eigen::MatrixXd dhead_aug = Eigen::MatrixXd::Zero(n + 1, l + 1);
  Eigen::MatrixXd ddep_aug = Eigen::MatrixXd::Zero(n, l + 1);

  Eigen::VectorXd head_vec(l + 1), dep_vec(l + 1);
  for (const LabelArcGrad& arc : arcs) {
    head_vec.head(l) = trace.head_act.row(arc.head).transpose();
    head_vec(l) = 1.0;
    dep_vec.head(l) = trace.dep_act.row(arc.dep - 1).transpose();
    dep_vec(l) = 1.0;
    for (int r = 0; r < params.label_count(); ++r) {
      const double g = arc.dscores(r);
      if (g == 0.0) continue;
      const Eigen::MatrixXd& bilinear = params.label_bilinear[static_cast<std::size_t>(r)];
      grad.label_bilinear[static_cast<std::size_t>(r)] += g * head_vec * dep_vec.transpose();
      dhead_aug.row(arc.head) += g * (bilinear * dep_vec).transpose();
      ddep_aug.row(arc.dep - 1) += g * (bilinear.transpose() * head_vec).transpose();
    }
  }

  Eigen::MatrixXd dhead_pre = dhead_aug.leftCols(l).cwiseProduct(
      (trace.head_pre.array() > 0.0).cast<double>().matrix());
  Eigen::MatrixXd ddep_pre = ddep_aug.leftCols(l).cwiseProduct(
      (trace.dep_pre.array() > 0.0).cast<double>().matrix());

  Eigen::MatrixXd input(n + 1, params.config.input_dim);
  input.row(0) = params.root_embedding.col(0).transpose();
  input.bottomRows(n) = word_vectors;

  grad.label_head_weight += dhead_pre.transpose() * input;
  grad.label_head_bias.col(0) += dhead_pre.colwise().sum().transpose();
  grad.label_dep_weight += ddep_pre.transpose() * word_vectors;
  grad.label_dep_bias.col(0) += ddep_pre.colwise().sum().transpose();
  grad.root_embedding.col(0) +=
      (dhead_pre.row(0) * params.label_head_weight).transpose();
}

}  // namespace udparse
