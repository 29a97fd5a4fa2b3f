#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "calib/loss.hpp"
#include "calib/matrix.hpp"

namespace calib {

struct DenseLayer {
  Matrix weight;             // out x in
  std::vector<double> bias;  // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// input -> [tanh hidden] -> K logits. One layer when hidden_dim == 0.
struct ModelParams {
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layers.front().weight.cols(); }
  std::size_t num_classes() const { return layers.back().weight.rows(); }
  std::size_t hidden_dim() const { return layers.size() > 1 ? layers.front().weight.rows() : 0; }
  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ModelParams init_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                       std::uint64_t seed);

// Zero weights and biases with the given architecture.
ModelParams zero_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes);

Matrix forward(const ModelParams& params, const Matrix& features);

// Loss and parameter gradients for one batch under the given ECE-loss weight.
std::pair<LossValue, ModelParams> backward(const ModelParams& params, const Matrix& features,
                                           std::span<const std::size_t> labels,
                                           double ece_weight, const LossConfig& loss);

ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double learning_rate);

}  // namespace calib
