#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "calib/loss.hpp"
#include "calib/metrics.hpp"
#include "test_support.hpp"

using namespace calib;

namespace {

// Independent evaluation of the sigmoid-of-tangent indicator.
double oracle_indicator(double p, double eps) {
  const double q = std::min(std::max(p, eps), 1.0 - eps);
  return 1.0 / (1.0 + std::exp(-std::tan(std::numbers::pi * q - std::numbers::pi / 2.0)));
}

// Materializes every bin's member list, then averages inside each bin.
double oracle_soft_ece(const Matrix& probs, const std::vector<std::size_t>& labels,
                       std::size_t bins, IndicatorVariant variant, double eps) {
  const std::size_t n = probs.rows();
  std::vector<std::vector<std::size_t>> members(bins);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = probs.row(i);
    const double conf = *std::max_element(p.begin(), p.end());
    for (std::size_t m = 0; m < bins; ++m) {
      const double lo = static_cast<double>(m) / static_cast<double>(bins);
      const double hi = static_cast<double>(m + 1) / static_cast<double>(bins);
      if (conf > lo && conf <= hi) members[m].push_back(i);
    }
  }
  double total = 0.0;
  for (const auto& bin : members) {
    if (bin.empty()) continue;
    double acc = 0.0;
    double conf = 0.0;
    for (std::size_t i : bin) {
      const auto p = probs.row(i);
      const auto top = std::max_element(p.begin(), p.end());
      const double q = variant == IndicatorVariant::MaxProb ? *top : p[labels[i]];
      acc += oracle_indicator(q, eps);
      conf += *top;
    }
    const auto sz = static_cast<double>(bin.size());
    total += sz / static_cast<double>(n) * std::abs(acc / sz - conf / sz);
  }
  return total;
}

// True when perturbing this row could move it across a bin edge or swap
// its predicted class.
bool near_discontinuity(std::span<const double> logits_row, std::size_t bins) {
  const auto p = softmax(logits_row);
  auto sorted = p;
  std::sort(sorted.rbegin(), sorted.rend());
  return testing::edge_distance(sorted[0], bins) < 1e-4 || sorted[0] - sorted[1] < 1e-4;
}

double max_gradient_error(const Matrix& logits, const std::vector<std::size_t>& labels,
                          const Matrix& analytic,
                          const std::function<double(const Matrix&)>& objective,
                          std::size_t bins) {
  const auto numeric = testing::central_differences(
      logits.data(), [&](const std::vector<double>& x) {
        Matrix m(logits.rows(), logits.cols());
        m.data() = x;
        return objective(m);
      });
  double worst = 0.0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (near_discontinuity(logits.row(i), bins)) continue;
    for (std::size_t k = 0; k < logits.cols(); ++k) {
      const std::size_t j = i * logits.cols() + k;
      worst = std::max(worst, testing::relative_error(numeric[j], analytic.data()[j]));
    }
  }
  (void)labels;
  return worst;
}

}  // namespace

TEST_CASE("softmax") {
  const auto half = softmax(std::vector<double>{0.0, 0.0});
  CHECK(half[0] == 0.5);
  CHECK(half[1] == 0.5);

  const auto third = softmax(std::vector<double>{2.5, 2.5, 2.5});
  for (double p : third) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  const auto tilted = softmax(std::vector<double>{1.0, 0.0});
  CHECK(std::abs(tilted[0] - 0.7310586) < 1e-6);
  CHECK(std::abs(tilted[1] - 0.2689414) < 1e-6);

  const auto huge = softmax(std::vector<double>{1000.0, 0.0, -1000.0});
  CHECK(huge[0] == 1.0);
  CHECK(std::isfinite(huge[2]));

  CHECK_THROWS_AS(softmax(std::vector<double>{1.0}), std::domain_error);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, INFINITY}), std::domain_error);
  CHECK_THROWS_AS(softmax(std::vector<double>{1.0, std::nan("")}), std::domain_error);
}

TEST_CASE("nll_loss") {
  SUBCASE("confident correct prediction costs nothing") {
    const Matrix probs = Matrix::from_rows({{1.0, 0.0, 0.0}});
    const std::vector<std::size_t> y{0};
    CHECK(nll_loss(probs, y).value == doctest::Approx(0.0));
  }
  SUBCASE("uniform over four classes") {
    const Matrix probs = Matrix::from_rows({{0.25, 0.25, 0.25, 0.25}});
    const std::vector<std::size_t> y{3};
    CHECK(std::abs(nll_loss(probs, y).value - 1.3862944) < 1e-7);
  }
  SUBCASE("gradient at zero logits") {
    const Matrix probs = softmax_rows(Matrix::from_rows({{0.0, 0.0}}));
    const std::vector<std::size_t> y{0};
    const auto r = nll_loss(probs, y);
    CHECK(r.grad_logits(0, 0) == -0.5);
    CHECK(r.grad_logits(0, 1) == 0.5);
  }
  SUBCASE("clamped zero probability stays finite") {
    const Matrix probs = Matrix::from_rows({{1.0, 0.0}});
    const std::vector<std::size_t> y{1};
    CHECK(nll_loss(probs, y, 1e-6).value == doctest::Approx(-std::log(1e-6)));
  }
  SUBCASE("invalid label") {
    const Matrix probs = Matrix::from_rows({{0.5, 0.5}});
    const std::vector<std::size_t> y{2};
    CHECK_THROWS_AS(nll_loss(probs, y), std::domain_error);
  }
}

TEST_CASE("soft_indicator fixed points") {
  CHECK(soft_indicator(0.5) == 0.5);
  CHECK(std::abs(soft_indicator(0.75) - 0.7310586) < 1e-6);
  CHECK(soft_indicator(1.0, 1e-6) > 0.999);
  CHECK(soft_indicator(0.0, 1e-6) < 0.001);
  CHECK(std::isfinite(soft_indicator_derivative(0.999999)));
}

TEST_CASE("soft_indicator symmetry and monotonicity") {
  const double eps = 1e-6;
  double previous = soft_indicator(eps, eps);
  for (int i = 1; i <= 2000; ++i) {
    const double p = eps + (1.0 - 2.0 * eps) * i / 2000.0;
    const double v = soft_indicator(p, eps);
    if (p > 0.02 && p < 0.98) {
      CHECK(v > previous);  // strict where it has not saturated in double
    } else {
      CHECK(v >= previous);
    }
    previous = v;
    CHECK(std::abs(soft_indicator(p, eps) + soft_indicator(1.0 - p, eps) - 1.0) < 1e-9);
  }
}

TEST_CASE("soft_indicator_derivative matches finite differences") {
  for (double p = 0.05; p < 0.96; p += 0.01) {
    const double h = 1e-6;
    const double fd = (soft_indicator(p + h) - soft_indicator(p - h)) / (2 * h);
    CHECK(testing::relative_error(fd, soft_indicator_derivative(p)) < 1e-6);
  }
  CHECK(soft_indicator_derivative(0.0) == 0.0);
  CHECK(soft_indicator_derivative(1.0) == 0.0);
}

TEST_CASE("soft_ece on hand-checked batches") {
  SUBCASE("confidence one half is a fixed point") {
    const Matrix probs = Matrix::from_rows({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
    const std::vector<std::size_t> y{0, 1, 1};
    CHECK(soft_ece(probs, y, 10, IndicatorVariant::MaxProb) == 0.0);
    CHECK(soft_ece(probs, y, 10, IndicatorVariant::TrueClassProb) == 0.0);
  }
  SUBCASE("single sample at confidence 0.75") {
    const Matrix probs = Matrix::from_rows({{0.75, 0.25}});
    const std::vector<std::size_t> y{1};
    CHECK(std::abs(soft_ece(probs, y, 10, IndicatorVariant::MaxProb) - 0.0189414) < 1e-6);
  }
  SUBCASE("empty batch") {
    const std::vector<std::size_t> y;
    CHECK_THROWS_AS(soft_ece(Matrix(), y, 10, IndicatorVariant::MaxProb), std::domain_error);
  }
}

TEST_CASE("soft_ece agrees with the materialized-bin oracle") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::size_t> size(1, 200);
  std::uniform_int_distribution<std::size_t> classes(2, 12);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = classes(rng);
    const std::size_t n = size(rng);
    const Matrix probs = softmax_rows(testing::random_matrix(n, k, rng, 3.0));
    const auto y = testing::random_labels(n, k, rng);
    for (auto variant : {IndicatorVariant::MaxProb, IndicatorVariant::TrueClassProb}) {
      for (std::size_t m : {1u, 2u, 10u, 15u}) {
        const double value = soft_ece(probs, y, m, variant);
        CHECK(value >= 0.0);
        CHECK(value <= 1.0);
        CHECK(std::abs(value - oracle_soft_ece(probs, y, m, variant, 1e-6)) < 1e-12);
      }
    }
  }
}

TEST_CASE("soft_ece tracks hard ece on confident correct batches") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> top(0.99, 1.0 - 1e-9);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const std::size_t k = 2 + rng() % 6;
    Matrix probs(n, k);
    std::vector<std::size_t> y(n);
    std::vector<PredictionRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = rng() % k;
      const double c = top(rng);
      for (std::size_t j = 0; j < k; ++j) probs(i, j) = (1.0 - c) / static_cast<double>(k - 1);
      probs(i, y[i]) = c;
      records.push_back(PredictionRecord{{probs.row(i).begin(), probs.row(i).end()}, y[i], c, y[i]});
    }
    const double hard = ece(build_reliability_table(records, 10));
    for (auto variant : {IndicatorVariant::MaxProb, IndicatorVariant::TrueClassProb}) {
      CHECK(std::abs(soft_ece(probs, y, 10, variant) - hard) < 0.01);
    }
  }
}

TEST_CASE("soft_ece_grad is zero when every bin is balanced") {
  const Matrix logits = Matrix::from_rows({{0.0, 0.0}, {1.3, 1.3}});
  const std::vector<std::size_t> y{0, 1};
  const Matrix g = soft_ece_grad(logits, y, 10, IndicatorVariant::MaxProb);
  for (double v : g.data()) CHECK(v == 0.0);
}

TEST_CASE("soft_ece_grad matches central finite differences") {
  std::mt19937_64 rng(2718);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 16;
    const std::size_t k = 2 + rng() % 3;
    const Matrix logits = testing::random_matrix(n, k, rng, 2.0);
    const auto y = testing::random_labels(n, k, rng);
    for (auto variant : {IndicatorVariant::MaxProb, IndicatorVariant::TrueClassProb}) {
      const Matrix g = soft_ece_grad(logits, y, 10, variant);
      worst = std::max(worst, max_gradient_error(
                                  logits, y, g,
                                  [&](const Matrix& z) {
                                    return soft_ece(softmax_rows(z), y, 10, variant);
                                  },
                                  10));
    }
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("soft_ece and its gradient are permutation invariant") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 2 + rng() % 40;
    const std::size_t k = 2 + rng() % 5;
    const Matrix logits = testing::random_matrix(n, k, rng, 2.0);
    const auto y = testing::random_labels(n, k, rng);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix shuffled(n, k);
    std::vector<std::size_t> y2(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy(logits.row(perm[i]).begin(), logits.row(perm[i]).end(), shuffled.row(i).begin());
      y2[i] = y[perm[i]];
    }
    for (auto variant : {IndicatorVariant::MaxProb, IndicatorVariant::TrueClassProb}) {
      CHECK(std::abs(soft_ece(softmax_rows(logits), y, 10, variant) -
                     soft_ece(softmax_rows(shuffled), y2, 10, variant)) < 1e-12);
      const Matrix g = soft_ece_grad(logits, y, 10, variant);
      const Matrix g2 = soft_ece_grad(shuffled, y2, 10, variant);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) {
          CHECK(std::abs(g(perm[i], c) - g2(i, c)) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("duplicated samples receive identical gradient rows") {
  const Matrix logits = Matrix::from_rows({{2.0, 0.1, -1.0}, {0.3, 1.2, 0.2}, {2.0, 0.1, -1.0}});
  const std::vector<std::size_t> y{1, 1, 1};
  for (auto variant : {IndicatorVariant::MaxProb, IndicatorVariant::TrueClassProb}) {
    const Matrix g = soft_ece_grad(logits, y, 10, variant);
    for (std::size_t c = 0; c < 3; ++c) CHECK(g(0, c) == g(2, c));
  }
}

TEST_CASE("curriculum_weight") {
  LossConfig cfg;
  cfg.gamma_e = 0.05;
  cfg.s_e = 0;
  cfg.total_epochs = 50;
  CHECK(curriculum_weight(0, cfg) == 0.0);
  CHECK(curriculum_weight(50, cfg) == 0.05);
  CHECK(std::abs(curriculum_weight(10, cfg) - 0.01) < 1e-15);

  cfg.s_e = 10;
  CHECK(curriculum_weight(5, cfg) == 0.0);
  CHECK(curriculum_weight(10, cfg) == 0.0);
  CHECK(curriculum_weight(50, cfg) == 0.05);
  for (std::size_t e = 0; e < 50; ++e) {
    CHECK(curriculum_weight(e, cfg) <= curriculum_weight(e + 1, cfg));
  }
  CHECK_THROWS_AS(curriculum_weight(51, cfg), std::domain_error);
}

TEST_CASE("combined_loss") {
  std::mt19937_64 rng(5);
  LossConfig cfg;
  cfg.gamma_e = 0.7;
  cfg.s_e = 3;
  cfg.total_epochs = 20;
  const Matrix logits = testing::random_matrix(12, 4, rng, 2.0);
  const auto y = testing::random_labels(12, 4, rng);

  SUBCASE("zero weight at the ramp start") {
    const auto v = combined_loss(logits, y, 3, cfg, true);
    CHECK(v.ece_weight == 0.0);
    CHECK(v.total == v.nll);
  }
  SUBCASE("fixed weight ignores the epoch") {
    for (std::size_t e : {0u, 7u, 19u}) {
      CHECK(combined_loss(logits, y, e, cfg, false).ece_weight == 0.7);
    }
  }
  SUBCASE("total decomposes") {
    const auto v = combined_loss(logits, y, 11, cfg, true);
    CHECK(std::abs(v.total - (v.nll + v.ece_weight * v.soft_ece)) < 1e-12);
  }
  SUBCASE("gamma zero is plain nll") {
    cfg.gamma_e = 0.0;
    const auto v = combined_loss(logits, y, 11, cfg, false);
    const auto nll = nll_loss(softmax_rows(logits), y, cfg.epsilon);
    CHECK(v.total == nll.value);
    CHECK(v.grad_logits == nll.grad_logits);
  }
}

TEST_CASE("combined_loss gradient matches finite differences") {
  std::mt19937_64 rng(31415);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 16;
    const std::size_t k = 2 + rng() % 3;
    LossConfig cfg;
    cfg.gamma_e = std::uniform_real_distribution<double>(0.05, 5.0)(rng);
    cfg.indicator_variant =
        trial % 2 ? IndicatorVariant::TrueClassProb : IndicatorVariant::MaxProb;
    const Matrix logits = testing::random_matrix(n, k, rng, 2.0);
    const auto y = testing::random_labels(n, k, rng);
    const auto v = combined_loss(logits, y, 25, cfg, true);
    worst = std::max(worst, max_gradient_error(
                                logits, y, v.grad_logits,
                                [&](const Matrix& z) { return combined_loss(z, y, 25, cfg, true).total; },
                                cfg.m_train));
  }
  MESSAGE("worst relative error " << worst);
  CHECK(worst < 1e-4);
}

TEST_CASE("auto_gamma") {
  CHECK(auto_gamma(0.1, 2.0) == doctest::Approx(0.05).epsilon(1e-15));
  CHECK(auto_gamma(2.5, 0.5) == 5.0);
  CHECK(auto_gamma(0.3, 0.3) == 1.0);
  CHECK_THROWS_AS(auto_gamma(0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(auto_gamma(1.0, -1.0), std::domain_error);
}

TEST_CASE("LossConfig validation") {
  LossConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.s_e = 50;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  cfg.s_e = 0;
  cfg.epsilon = 0.5;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  cfg.epsilon = 1e-6;
  cfg.m_train = 0;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  CHECK(parse_indicator_variant("true_class_prob") == IndicatorVariant::TrueClassProb);
  CHECK_THROWS_AS(parse_indicator_variant("bogus"), std::domain_error);
}
