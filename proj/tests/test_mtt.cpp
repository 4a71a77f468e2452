#include <catch2/catch.hpp>
#include <cmath>

#include "support/helpers.hpp"
#include "udparse/mtt.hpp"
#include "udparse/oracle.hpp"
#include "udparse/trainer.hpp"

using namespace udparse;
using testsupport::random_raw_scores;

TEST_CASE("local_normalize matches direct log-softmax arithmetic") {
  ScoreMatrix scores(2);
  scores.at(0, 1) = 0.0;
  scores.at(2, 1) = 0.0;
  scores.at(0, 2) = kNegInf;
  scores.at(1, 2) = 5.0;
  NormalizedScores logp = local_normalize(scores);
  CHECK(logp.at(0, 1) == Approx(-std::log(2.0)).margin(1e-12));
  CHECK(logp.at(2, 1) == Approx(-std::log(2.0)).margin(1e-12));
  CHECK(logp.at(0, 2) == kNegInf);
  CHECK(logp.at(1, 2) == Approx(0.0).margin(1e-12));

  ScoreMatrix three(3);
  three.at(0, 1) = 1.0;
  three.at(2, 1) = 2.0;
  three.at(3, 1) = 3.0;
  NormalizedScores n3 = local_normalize(three);
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0));
  CHECK(n3.at(0, 1) == Approx(1.0 - lse).margin(1e-12));
  CHECK(n3.at(2, 1) == Approx(2.0 - lse).margin(1e-12));
  CHECK(n3.at(3, 1) == Approx(3.0 - lse).margin(1e-12));
}

TEST_CASE("local_normalize output sums to one per dependent") {
  SplitMix64 rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(6));
    NormalizedScores logp = local_normalize(random_raw_scores(n, rng.next()));
    for (int c = 1; c <= n; ++c) {
      double sum = 0.0;
      for (int h = 0; h <= n; ++h) {
        if (h != c) sum += std::exp(logp.at(h, c));
      }
      CHECK(sum == Approx(1.0).margin(1e-10));
    }
  }
}

TEST_CASE("local_normalize rejects an all-banned column") {
  ScoreMatrix scores(2);
  scores.at(0, 1) = kNegInf;
  scores.at(2, 1) = kNegInf;
  CHECK_THROWS_AS(local_normalize(scores), DataError);
}

TEST_CASE("log_partition of a one-word sentence is zero after normalization") {
  NormalizedScores logp = local_normalize(random_raw_scores(1, 5));
  CHECK(log_partition(logp, true) == Approx(0.0).margin(1e-12));
  CHECK(log_partition(logp, false) == Approx(0.0).margin(1e-12));
}

TEST_CASE("uniform n=2 partition matches the two/three enumerated trees") {
  ScoreMatrix scores(2);  // all finite raw scores zero
  NormalizedScores logp = local_normalize(scores);
  // Each finite cell is -ln 2; the two single-root trees each weigh 1/4.
  const double single = log_partition(logp, true);
  CHECK(single == Approx(std::log(0.5)).margin(1e-12));
  CHECK(single == Approx(brute_force_log_partition(logp, true)).margin(1e-12));
  // Multi-root adds the {(0,1),(0,2)} tree.
  const double multi = log_partition(logp, false);
  CHECK(multi == Approx(std::log(0.75)).margin(1e-12));
  CHECK(multi == Approx(brute_force_log_partition(logp, false)).margin(1e-12));
  CHECK(multi > single);
}

TEST_CASE("log_partition matches enumeration on random instances") {
  SplitMix64 rng(808);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(5));
    NormalizedScores logp = local_normalize(random_raw_scores(n, rng.next()));
    for (bool single_root : {true, false}) {
      const double det = log_partition(logp, single_root);
      const double enumerated = brute_force_log_partition(logp, single_root);
      CHECK(det == Approx(enumerated).epsilon(1e-10));
    }
  }
}

TEST_CASE("tree_log_prob: forced tree has probability one at n=1") {
  NormalizedScores logp = local_normalize(random_raw_scores(1, 3));
  CHECK(tree_log_prob(logp, {0}, true) == Approx(0.0).margin(1e-12));
}

TEST_CASE("tree_log_prob: uniform n=2 single-root trees each get 1/2") {
  NormalizedScores logp = local_normalize(ScoreMatrix(2));
  CHECK(tree_log_prob(logp, {0, 1}, true) == Approx(-std::log(2.0)).margin(1e-12));
  CHECK(tree_log_prob(logp, {2, 0}, true) == Approx(-std::log(2.0)).margin(1e-12));
}

TEST_CASE("tree probabilities sum to one over the enumeration") {
  SplitMix64 rng(909);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(5));
    NormalizedScores logp = local_normalize(random_raw_scores(n, rng.next()));
    for (bool single_root : {true, false}) {
      double total = 0.0;
      for_each_tree(n, single_root, [&](const std::vector<int>& heads) {
        const double lp = tree_log_prob(logp, heads, single_root);
        CHECK(lp <= 1e-12);  // probabilities live in (0, 1]
        total += std::exp(lp);
      });
      CHECK(total == Approx(1.0).margin(1e-8));
    }
  }
}

TEST_CASE("tree_log_prob rejects invalid trees") {
  NormalizedScores logp = local_normalize(ScoreMatrix(2));
  CHECK_THROWS_AS(tree_log_prob(logp, {2, 1}, false), DataError);
  CHECK_THROWS_AS(tree_log_prob(logp, {0, 0}, true), DataError);
}

TEST_CASE("marginals: forced arc at n=1, uniform halves at n=2") {
  NormalizedScores one = local_normalize(random_raw_scores(1, 17));
  Eigen::MatrixXd mu1 = arc_marginals(one, true);
  CHECK(mu1(0, 0) == Approx(1.0).margin(1e-12));

  NormalizedScores two = local_normalize(ScoreMatrix(2));
  Eigen::MatrixXd mu2 = arc_marginals(two, true);
  CHECK(mu2(0, 0) == Approx(0.5).margin(1e-12));  // (0,1)
  CHECK(mu2(0, 1) == Approx(0.5).margin(1e-12));  // (0,2)
  CHECK(mu2(1, 1) == Approx(0.5).margin(1e-12));  // (1,2)
  CHECK(mu2(2, 0) == Approx(0.5).margin(1e-12));  // (2,1)
}

TEST_CASE("marginals match enumeration and finite differences") {
  SplitMix64 rng(1111);
  for (int trial = 0; trial < 8; ++trial) {
    const int n = 4;
    NormalizedScores logp = local_normalize(random_raw_scores(n, rng.next()));
    for (bool single_root : {true, false}) {
      Eigen::MatrixXd mu = arc_marginals(logp, single_root);
      Eigen::MatrixXd enumerated = brute_force_marginals(logp, single_root);
      CHECK((mu - enumerated).cwiseAbs().maxCoeff() < 1e-8);

      // Central finite differences of log_partition, step 1e-5.
      for (int c = 1; c <= n; ++c) {
        for (int h = 0; h <= n; ++h) {
          if (h == c) continue;
          const double kStep = 1e-5;
          const double original = logp.at(h, c);
          logp.at(h, c) = original + kStep;
          const double up = log_partition(logp, single_root);
          logp.at(h, c) = original - kStep;
          const double down = log_partition(logp, single_root);
          logp.at(h, c) = original;
          CHECK(mu(h, c - 1) == Approx((up - down) / (2.0 * kStep)).margin(1e-4));
        }
      }
    }
  }
}

TEST_CASE("marginal columns sum to one; single-root ROOT row sums to one") {
  SplitMix64 rng(2222);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(6));
    NormalizedScores logp = local_normalize(random_raw_scores(n, rng.next()));
    for (bool single_root : {true, false}) {
      Eigen::MatrixXd mu = arc_marginals(logp, single_root);
      for (int c = 1; c <= n; ++c) {
        CHECK(mu.col(c - 1).sum() == Approx(1.0).margin(1e-10));
      }
      if (single_root) {
        CHECK(mu.row(0).sum() == Approx(1.0).margin(1e-10));
      }
    }
  }
}

TEST_CASE("adding a constant to a raw-score column changes nothing downstream") {
  SplitMix64 rng(3333);
  const int n = 4;
  ScoreMatrix raw = random_raw_scores(n, 77);
  ScoreMatrix shifted = raw;
  for (int h = 0; h <= n; ++h) {
    if (h != 2 && shifted.at(h, 2) > kNegInf) shifted.at(h, 2) += 3.7;
  }
  NormalizedScores base = local_normalize(raw);
  NormalizedScores moved = local_normalize(shifted);
  for (int c = 1; c <= n; ++c) {
    for (int h = 0; h <= n; ++h) {
      if (h == c) continue;
      CHECK(moved.at(h, c) == Approx(base.at(h, c)).margin(1e-12));
    }
  }
  for (bool single_root : {true, false}) {
    CHECK(log_partition(moved, single_root) ==
          Approx(log_partition(base, single_root)).margin(1e-12));
    CHECK((arc_marginals(moved, single_root) - arc_marginals(base, single_root))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  std::vector<int> tree = {0, 1, 2, 3};
  CHECK(tree_log_prob(moved, tree, true) ==
        Approx(tree_log_prob(base, tree, true)).margin(1e-12));
}

TEST_CASE("uniform 200-word partition matches the closed form") {
  // Over uniform weights 1/n the single-root tree count is n^(n-1), so
  // log Z collapses to -ln n; multi-root counts (n+1)^(n-1) trees.
  const int n = 200;
  NormalizedScores logp = local_normalize(ScoreMatrix(n));
  CHECK(log_partition(logp, true) == Approx(-std::log(200.0)).margin(1e-9));
  CHECK(log_partition(logp, false) ==
        Approx(199.0 * std::log(201.0) - 200.0 * std::log(200.0)).margin(1e-9));
}

TEST_CASE("log-domain evaluation survives vanishing tree mass") {
  // Words paired into mutual-attachment 2-cycles put almost no probability
  // on any actual tree: the summed mass lands near exp(-1400), far below
  // what a plain determinant could represent in a double.
  const int n = 200;
  ScoreMatrix raw(n);
  for (int k = 1; k + 1 <= n; k += 2) {
    raw.at(k, k + 1) = 20.0;
    raw.at(k + 1, k) = 20.0;
  }
  NormalizedScores logp = local_normalize(raw);
  for (bool single_root : {true, false}) {
    const double log_z = log_partition(logp, single_root);
    CHECK(std::isfinite(log_z));
    CHECK(log_z < -1000.0);
    Eigen::MatrixXd mu = arc_marginals(logp, single_root);
    for (int c = 1; c <= n; ++c) {
      CHECK(mu.col(c - 1).sum() == Approx(1.0).margin(1e-9));
    }
    if (single_root) CHECK(mu.row(0).sum() == Approx(1.0).margin(1e-9));
  }

  // The same structure at enumerable size: the determinant sits seventeen
  // orders of magnitude below the matrix scale, so cancellation costs it a
  // few digits against the exact enumeration.
  ScoreMatrix small(4);
  small.at(1, 2) = 20.0;
  small.at(2, 1) = 20.0;
  small.at(3, 4) = 20.0;
  small.at(4, 3) = 20.0;
  NormalizedScores small_logp = local_normalize(small);
  for (bool single_root : {true, false}) {
    CHECK(log_partition(small_logp, single_root) ==
          Approx(brute_force_log_partition(small_logp, single_root)).margin(1e-6));
  }
}

TEST_CASE("a singular Kirchhoff matrix reports degenerate weights") {
  // Banning every ROOT arc leaves the single-root matrix with a zero first
  // row: no tree has weight, and the guard refuses instead of returning
  // log(0).
  ScoreMatrix raw(2);
  raw.at(0, 1) = kNegInf;
  raw.at(0, 2) = kNegInf;
  NormalizedScores logp = local_normalize(raw);
  CHECK_THROWS_WITH(log_partition(logp, true), Catch::Contains("degenerate"));
  CHECK_THROWS_AS(arc_marginals(logp, true), DataError);
}

TEST_CASE("loss: perfect one-word arc term vanishes, labels remain") {
  const int n = 1;
  ScoreMatrix scores(n);
  LabelScores labels(n, 2);
  labels.at(0, 1, 0) = 2.0;
  labels.at(0, 1, 1) = -1.0;
  SentenceLoss l = loss(scores, labels, {0}, {0}, true);
  CHECK(l.arc_nll_sum == Approx(0.0).margin(1e-12));
  const double expected_ce = std::log(std::exp(2.0) + std::exp(-1.0)) - 2.0;
  CHECK(l.label_nll_sum == Approx(expected_ce).margin(1e-12));
  CHECK(l.value == Approx(expected_ce).margin(1e-12));
}

TEST_CASE("loss: uniform n=2 arc term is ln 2 before token averaging") {
  ScoreMatrix scores(2);
  LabelScores labels(2, 1);
  SentenceLoss l = loss(scores, labels, {0, 1}, {0, 0}, true);
  CHECK(l.arc_nll_sum == Approx(std::log(2.0)).margin(1e-12));
  CHECK(l.tokens == 2);
  CHECK(l.value == Approx((l.arc_nll_sum + l.label_nll_sum) / 2.0).margin(1e-12));
}

TEST_CASE("analytic parameter gradients match central finite differences") {
  BiaffineConfig config{4, 5, 4};
  std::vector<std::string> inventory = {"a", "b", "root"};
  SplitMix64 rng(4242);
  for (bool single_root : {true, false}) {
    BiaffineParams params = testsupport::random_params(config, inventory, 97, 0.5);
    SentenceExample example;
    example.word_vectors = testsupport::random_matrix(3, 4, rng, 0.8);
    example.heads = {0, 1, 2};
    example.label_ids = {2, 0, 1};

    BiaffineParams grad = zero_like(params);
    std::vector<SentenceExample> batch = {example};
    batch_loss_grad(batch, params, single_root, 1, grad);

    auto loss_value = [&]() {
      ScoreMatrix s = arc_scores(example.word_vectors, params);
      LabelScores l = label_scores(example.word_vectors, params);
      return loss(s, l, example.heads, example.label_ids, single_root).value;
    };

    auto grad_views = tensor_views(grad);
    auto param_views = tensor_views(params);
    const double kStep = 1e-4;
    for (std::size_t t = 0; t < param_views.size(); ++t) {
      Eigen::MatrixXd& tensor = *param_views[t].second;
      for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
        for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
          const double original = tensor(r, c);
          tensor(r, c) = original + kStep;
          const double up = loss_value();
          tensor(r, c) = original - kStep;
          const double down = loss_value();
          tensor(r, c) = original;
          const double fd = (up - down) / (2.0 * kStep);
          const double analytic = (*grad_views[t].second)(r, c);
          INFO(param_views[t].first << "(" << r << "," << c << ") single_root="
                                    << single_root);
          CHECK(std::abs(analytic - fd) <=
                1e-4 * std::max({1.0, std::abs(analytic), std::abs(fd)}));
        }
      }
    }
  }
}
