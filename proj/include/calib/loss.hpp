#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "calib/matrix.hpp"

namespace calib {

// Which probability feeds the sigmoid-of-tangent soft indicator when
// estimating per-bin accuracy.
enum class IndicatorVariant {
  MaxProb,        // the sample's confidence (max probability)
  TrueClassProb,  // the probability assigned to the true class
};

std::string_view to_string(IndicatorVariant variant);
IndicatorVariant parse_indicator_variant(std::string_view name);

struct LossConfig {
  double gamma_e = 0.05;          // target ECE-loss weight
  std::size_t s_e = 0;            // epoch at which the ECE loss enters
  std::size_t total_epochs = 50;  // N
  std::size_t m_train = 10;       // bins used while training
  double epsilon = 1e-6;          // probability clamp before tan()
  IndicatorVariant indicator_variant = IndicatorVariant::MaxProb;

  // Throws std::domain_error on a violated invariant.
  void validate() const;
};

struct LossValue {
  double nll = 0.0;
  double soft_ece = 0.0;
  double ece_weight = 0.0;
  double total = 0.0;
  Matrix grad_logits;  // batch x K
};

struct NllResult {
  double value = 0.0;
  Matrix grad_logits;
};

// Row-wise softmax with max subtraction. Throws on non-finite input or K < 2.
std::vector<double> softmax(std::span<const double> logits);
Matrix softmax_rows(const Matrix& logits);

// Mean of -log(max(p_y, epsilon)); the gradient is (softmax - onehot)/batch.
NllResult nll_loss(const Matrix& probs, std::span<const std::size_t> labels,
                   double epsilon = 1e-6);

// S(tan(pi*p' - pi/2)) with p' = clamp(p, epsilon, 1 - epsilon) and S the
// logistic sigmoid.
double soft_indicator(double p, double epsilon = 1e-6);

// d/dp of soft_indicator; zero where the clamp is active.
double soft_indicator_derivative(double p, double epsilon = 1e-6);

// Binned ECE with each bin's accuracy replaced by the mean soft indicator.
// Binning uses the hard confidence, exactly as bin_index does.
double soft_ece(const Matrix& probs, std::span<const std::size_t> labels,
                std::size_t num_bins, IndicatorVariant variant, double epsilon = 1e-6);

// Analytic gradient of soft_ece with respect to the logits that produced
// softmax_rows(logits). Bin membership is held fixed and sign(0) = 0.
Matrix soft_ece_grad(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_bins, IndicatorVariant variant, double epsilon = 1e-6);

// Linear ramp: 0 before s_e, then ((c_e - s_e)/(N - s_e)) * gamma_e.
double curriculum_weight(std::size_t epoch, const LossConfig& config);

// nll + w * soft_ece, with w the curriculum weight for `epoch` when
// `curriculum` is set and gamma_e otherwise.
LossValue combined_loss(const Matrix& logits, std::span<const std::size_t> labels,
                        std::size_t epoch, const LossConfig& config, bool curriculum);

// Same objective with an explicit ECE-loss weight. A zero weight skips the
// soft-ECE gradient so the result is the NLL gradient bit for bit.
LossValue combined_loss_weighted(const Matrix& logits, std::span<const std::size_t> labels,
                                 double ece_weight, const LossConfig& config);

// The ECE-loss weight that equalizes the two loss magnitudes.
double auto_gamma(double nll_sample, double soft_ece_sample);

}  // namespace calib
