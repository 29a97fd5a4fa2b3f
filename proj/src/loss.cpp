#include "calib/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "calib/metrics.hpp"

namespace calib {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double tangent_argument(double p, double epsilon) {
  const double clamped = std::clamp(p, epsilon, 1.0 - epsilon);
  return std::tan(std::numbers::pi * clamped - std::numbers::pi / 2.0);
}

void check_batch(const Matrix& probs, std::span<const std::size_t> labels, const char* who) {
  if (probs.rows() == 0) {
    throw std::domain_error(std::string(who) + ": empty batch");
  }
  if (labels.size() != probs.rows()) {
    throw std::domain_error(std::string(who) + ": label count does not match batch size");
  }
  for (std::size_t label : labels) {
    if (label >= probs.cols()) {
      throw std::domain_error(std::string(who) + ": label " + std::to_string(label) +
                              " out of range");
    }
  }
}

double indicator_input(std::span<const double> p, std::size_t predicted, std::size_t label,
                       IndicatorVariant variant) {
  return variant == IndicatorVariant::MaxProb ? p[predicted] : p[label];
}

// Per-bin signed residual sum_{i in B_m} (soft_indicator(q_i) - conf_i),
// together with each sample's bin. The soft-ECE is (1/n) * sum_m |residual_m|.
struct BinResiduals {
  std::vector<std::size_t> bin_of;
  std::vector<std::size_t> predicted;
  std::vector<double> residual;
};

BinResiduals bin_residuals(const Matrix& probs, std::span<const std::size_t> labels,
                           std::size_t num_bins, IndicatorVariant variant, double epsilon) {
  BinResiduals out;
  out.bin_of.resize(probs.rows());
  out.predicted.resize(probs.rows());
  out.residual.assign(num_bins, 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    const std::size_t pred = argmax(p);
    const double conf = p[pred];
    const std::size_t b = bin_index(conf, num_bins);
    out.bin_of[i] = b;
    out.predicted[i] = pred;
    out.residual[b] +=
        soft_indicator(indicator_input(p, pred, labels[i], variant), epsilon) - conf;
  }
  return out;
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::string_view to_string(IndicatorVariant variant) {
  switch (variant) {
    case IndicatorVariant::MaxProb:
      return "max_prob";
    case IndicatorVariant::TrueClassProb:
      return "true_class_prob";
  }
  return "max_prob";
}

IndicatorVariant parse_indicator_variant(std::string_view name) {
  if (name == "max_prob") {
    return IndicatorVariant::MaxProb;
  }
  if (name == "true_class_prob") {
    return IndicatorVariant::TrueClassProb;
  }
  throw std::domain_error("unknown indicator variant: " + std::string(name));
}

void LossConfig::validate() const {
  if (!(gamma_e >= 0.0) || !std::isfinite(gamma_e)) {
    throw std::domain_error("LossConfig: gamma_e must be finite and non-negative");
  }
  if (total_epochs == 0) {
    throw std::domain_error("LossConfig: total_epochs must be positive");
  }
  if (s_e >= total_epochs) {
    throw std::domain_error("LossConfig: s_e must be less than total_epochs");
  }
  if (m_train == 0) {
    throw std::domain_error("LossConfig: m_train must be positive");
  }
  if (!(epsilon > 0.0 && epsilon < 0.5)) {
    throw std::domain_error("LossConfig: epsilon must lie in (0, 0.5)");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.size() < 2) {
    throw std::domain_error("softmax: need at least two classes");
  }
  double hi = logits[0];
  for (double z : logits) {
    if (!std::isfinite(z)) {
      throw std::domain_error("softmax: non-finite logit");
    }
    hi = std::max(hi, z);
  }
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t k = 0; k < logits.size(); ++k) {
    out[k] = std::exp(logits[k] - hi);
    total += out[k];
  }
  for (double& v : out) {
    v /= total;
  }
  return out;
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto row = softmax(logits.row(i));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

NllResult nll_loss(const Matrix& probs, std::span<const std::size_t> labels, double epsilon) {
  check_batch(probs, labels, "nll_loss");
  const auto n = static_cast<double>(probs.rows());
  NllResult out;
  out.grad_logits = Matrix(probs.rows(), probs.cols());
  double total = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    total -= std::log(std::max(p[labels[i]], epsilon));
    auto g = out.grad_logits.row(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      g[k] = p[k] / n;
    }
    g[labels[i]] -= 1.0 / n;
  }
  out.value = total / n;
  return out;
}

double soft_indicator(double p, double epsilon) {
  return sigmoid(tangent_argument(p, epsilon));
}

double soft_indicator_derivative(double p, double epsilon) {
  if (!(p > epsilon && p < 1.0 - epsilon)) {
    return 0.0;
  }
  const double t = tangent_argument(p, epsilon);
  const double s = sigmoid(t);
  // d/dp tan(pi*p - pi/2) = pi * sec^2 = pi * (1 + tan^2)
  return s * (1.0 - s) * std::numbers::pi * (1.0 + t * t);
}

double soft_ece(const Matrix& probs, std::span<const std::size_t> labels,
                std::size_t num_bins, IndicatorVariant variant, double epsilon) {
  check_batch(probs, labels, "soft_ece");
  if (num_bins == 0) {
    throw std::domain_error("soft_ece: bin count must be positive");
  }
  std::vector<std::size_t> count(num_bins, 0);
  std::vector<double> soft_acc(num_bins, 0.0);
  std::vector<double> conf(num_bins, 0.0);
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    const std::size_t pred = argmax(p);
    const std::size_t b = bin_index(p[pred], num_bins);
    ++count[b];
    soft_acc[b] += soft_indicator(indicator_input(p, pred, labels[i], variant), epsilon);
    conf[b] += p[pred];
  }
  const auto n = static_cast<double>(probs.rows());
  double total = 0.0;
  for (std::size_t b = 0; b < num_bins; ++b) {
    if (count[b] == 0) {
      continue;
    }
    const auto cnt = static_cast<double>(count[b]);
    total += cnt / n * std::abs(soft_acc[b] / cnt - conf[b] / cnt);
  }
  return total;
}

Matrix soft_ece_grad(const Matrix& logits, std::span<const std::size_t> labels,
                     std::size_t num_bins, IndicatorVariant variant, double epsilon) {
  check_batch(logits, labels, "soft_ece_grad");
  if (num_bins == 0) {
    throw std::domain_error("soft_ece_grad: bin count must be positive");
  }
  const Matrix probs = softmax_rows(logits);
  const BinResiduals bins = bin_residuals(probs, labels, num_bins, variant, epsilon);
  const auto n = static_cast<double>(probs.rows());

  Matrix grad(probs.rows(), probs.cols());
  std::vector<double> dprob(probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const double weight = sign(bins.residual[bins.bin_of[i]]) / n;
    if (weight == 0.0) {
      continue;
    }
    const auto p = probs.row(i);
    const std::size_t pred = bins.predicted[i];
    const std::size_t q_index = variant == IndicatorVariant::MaxProb ? pred : labels[i];

    std::fill(dprob.begin(), dprob.end(), 0.0);
    dprob[q_index] += weight * soft_indicator_derivative(p[q_index], epsilon);
    dprob[pred] -= weight;

    // Softmax Jacobian-vector product: dz_j = p_j * (g_j - <g, p>).
    double dot = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      dot += dprob[k] * p[k];
    }
    auto g = grad.row(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      g[k] = p[k] * (dprob[k] - dot);
    }
  }
  return grad;
}

double curriculum_weight(std::size_t epoch, const LossConfig& config) {
  if (epoch > config.total_epochs) {
    throw std::domain_error("curriculum_weight: epoch " + std::to_string(epoch) +
                            " exceeds total epochs " + std::to_string(config.total_epochs));
  }
  if (config.s_e >= config.total_epochs) {
    throw std::domain_error("curriculum_weight: s_e must be less than total_epochs");
  }
  if (epoch < config.s_e) {
    return 0.0;
  }
  const auto done = static_cast<double>(epoch - config.s_e);
  const auto span = static_cast<double>(config.total_epochs - config.s_e);
  return done / span * config.gamma_e;
}

LossValue combined_loss(const Matrix& logits, std::span<const std::size_t> labels,
                        std::size_t epoch, const LossConfig& config, bool curriculum) {
  const double weight = curriculum ? curriculum_weight(epoch, config) : config.gamma_e;
  return combined_loss_weighted(logits, labels, weight, config);
}

LossValue combined_loss_weighted(const Matrix& logits, std::span<const std::size_t> labels,
                                 double ece_weight, const LossConfig& config) {
  check_batch(logits, labels, "combined_loss");
  if (!(ece_weight >= 0.0)) {
    throw std::domain_error("combined_loss: ECE weight must be non-negative");
  }
  const Matrix probs = softmax_rows(logits);
  NllResult nll = nll_loss(probs, labels, config.epsilon);

  LossValue out;
  out.nll = nll.value;
  out.soft_ece = soft_ece(probs, labels, config.m_train, config.indicator_variant, config.epsilon);
  out.ece_weight = ece_weight;
  out.total = out.nll + ece_weight * out.soft_ece;
  out.grad_logits = std::move(nll.grad_logits);
  if (ece_weight != 0.0) {
    const Matrix ece_grad =
        soft_ece_grad(logits, labels, config.m_train, config.indicator_variant, config.epsilon);
    auto& g = out.grad_logits.data();
    const auto& e = ece_grad.data();
    for (std::size_t j = 0; j < g.size(); ++j) {
      g[j] += ece_weight * e[j];
    }
  }
  return out;
}

double auto_gamma(double nll_sample, double soft_ece_sample) {
  if (!(nll_sample > 0.0) || !(soft_ece_sample > 0.0)) {
    throw std::domain_error("auto_gamma: both loss samples must be positive");
  }
  return nll_sample / soft_ece_sample;
}

}  // namespace calib
