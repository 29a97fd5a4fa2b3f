#include "calib/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace calib {
namespace {

DenseLayer make_layer(std::size_t out, std::size_t in) {
  return DenseLayer{Matrix(out, in), std::vector<double>(out, 0.0)};
}

void check_dims(std::size_t input_dim, std::size_t num_classes) {
  if (input_dim == 0) {
    throw std::domain_error("model: input_dim must be positive");
  }
  if (num_classes < 2) {
    throw std::domain_error("model: need at least two classes");
  }
}

Matrix affine(const DenseLayer& layer, const Matrix& in) {
  if (in.cols() != layer.weight.cols()) {
    throw std::domain_error("forward: feature width " + std::to_string(in.cols()) +
                            " does not match layer input " +
                            std::to_string(layer.weight.cols()));
  }
  Matrix out(in.rows(), layer.weight.rows());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    const auto x = in.row(i);
    auto y = out.row(i);
    for (std::size_t o = 0; o < layer.weight.rows(); ++o) {
      const auto w = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t j = 0; j < x.size(); ++j) {
        acc += w[j] * x[j];
      }
      y[o] = acc;
    }
  }
  return out;
}

// grad.weight = delta^T * in, grad.bias = column sums of delta.
DenseLayer layer_grad(const Matrix& delta, const Matrix& in) {
  DenseLayer g = make_layer(delta.cols(), in.cols());
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    const auto d = delta.row(i);
    const auto x = in.row(i);
    for (std::size_t o = 0; o < d.size(); ++o) {
      g.bias[o] += d[o];
      auto w = g.weight.row(o);
      for (std::size_t j = 0; j < x.size(); ++j) {
        w[j] += d[o] * x[j];
      }
    }
  }
  return g;
}

// delta * W: propagates an output-side gradient to the layer input.
Matrix back_through(const Matrix& delta, const DenseLayer& layer) {
  Matrix out(delta.rows(), layer.weight.cols());
  for (std::size_t i = 0; i < delta.rows(); ++i) {
    const auto d = delta.row(i);
    auto o = out.row(i);
    for (std::size_t k = 0; k < d.size(); ++k) {
      const auto w = layer.weight.row(k);
      for (std::size_t j = 0; j < o.size(); ++j) {
        o[j] += d[k] * w[j];
      }
    }
  }
  return out;
}

}  // namespace

bool ModelParams::same_shape(const ModelParams& other) const {
  if (layers.size() != other.layers.size()) {
    return false;
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (!layers[l].weight.same_shape(other.layers[l].weight) ||
        layers[l].bias.size() != other.layers[l].bias.size()) {
      return false;
    }
  }
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& layer : layers) {
    for (double w : layer.weight.data()) {
      if (!std::isfinite(w)) return false;
    }
    for (double b : layer.bias) {
      if (!std::isfinite(b)) return false;
    }
  }
  return true;
}

ModelParams zero_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes) {
  check_dims(input_dim, num_classes);
  ModelParams params;
  if (hidden_dim == 0) {
    params.layers.push_back(make_layer(num_classes, input_dim));
  } else {
    params.layers.push_back(make_layer(hidden_dim, input_dim));
    params.layers.push_back(make_layer(num_classes, hidden_dim));
  }
  return params;
}

ModelParams init_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t num_classes,
                       std::uint64_t seed) {
  ModelParams params = zero_model(input_dim, hidden_dim, num_classes);
  std::mt19937_64 rng(seed);
  for (auto& layer : params.layers) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-scale, scale);
    for (double& w : layer.weight.data()) {
      w = dist(rng);
    }
  }
  return params;
}

Matrix forward(const ModelParams& params, const Matrix& features) {
  if (params.layers.empty()) {
    throw std::domain_error("forward: model has no layers");
  }
  Matrix act = affine(params.layers.front(), features);
  for (std::size_t l = 1; l < params.layers.size(); ++l) {
    for (double& v : act.data()) {
      v = std::tanh(v);
    }
    act = affine(params.layers[l], act);
  }
  return act;
}

std::pair<LossValue, ModelParams> backward(const ModelParams& params, const Matrix& features,
                                           std::span<const std::size_t> labels,
                                           double ece_weight, const LossConfig& loss) {
  if (params.layers.empty() || params.layers.size() > 2) {
    throw std::domain_error("backward: expected one or two layers");
  }
  ModelParams grads;
  if (params.layers.size() == 1) {
    const Matrix logits = affine(params.layers[0], features);
    LossValue value = combined_loss_weighted(logits, labels, ece_weight, loss);
    grads.layers.push_back(layer_grad(value.grad_logits, features));
    return {std::move(value), std::move(grads)};
  }

  Matrix hidden = affine(params.layers[0], features);
  for (double& v : hidden.data()) {
    v = std::tanh(v);
  }
  const Matrix logits = affine(params.layers[1], hidden);
  LossValue value = combined_loss_weighted(logits, labels, ece_weight, loss);

  DenseLayer out_grad = layer_grad(value.grad_logits, hidden);
  Matrix delta = back_through(value.grad_logits, params.layers[1]);
  for (std::size_t j = 0; j < delta.data().size(); ++j) {
    const double h = hidden.data()[j];
    delta.data()[j] *= 1.0 - h * h;
  }
  grads.layers.push_back(layer_grad(delta, features));
  grads.layers.push_back(std::move(out_grad));
  return {std::move(value), std::move(grads)};
}

ModelParams sgd_step(const ModelParams& params, const ModelParams& grads, double learning_rate) {
  if (!params.same_shape(grads)) {
    throw std::domain_error("sgd_step: parameter and gradient shapes differ");
  }
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw std::domain_error("sgd_step: learning rate must be finite and non-negative");
  }
  ModelParams next = params;
  for (std::size_t l = 0; l < next.layers.size(); ++l) {
    auto& w = next.layers[l].weight.data();
    const auto& gw = grads.layers[l].weight.data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      w[j] -= learning_rate * gw[j];
    }
    auto& b = next.layers[l].bias;
    const auto& gb = grads.layers[l].bias;
    for (std::size_t j = 0; j < b.size(); ++j) {
      b[j] -= learning_rate * gb[j];
    }
  }
  return next;
}

}  // namespace calib
