#include "calib/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "calib/shuffle.hpp"

namespace calib {
namespace {

// `count` orthonormal vectors in R^dim from Gram-Schmidt on Gaussian draws.
std::vector<std::vector<double>> random_frame(std::size_t count, std::size_t dim,
                                              std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> frame;
  while (frame.size() < count) {
    std::vector<double> v(dim);
    for (double& x : v) {
      x = gauss(rng);
    }
    for (const auto& u : frame) {
      const double dot = std::inner_product(v.begin(), v.end(), u.begin(), 0.0);
      for (std::size_t j = 0; j < dim; ++j) {
        v[j] -= dot * u[j];
      }
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-8) {
      continue;
    }
    for (double& x : v) {
      x /= norm;
    }
    frame.push_back(std::move(v));
  }
  return frame;
}

}  // namespace

void Dataset::validate() const {
  if (features.rows() != labels.size()) {
    throw std::domain_error("Dataset: feature rows do not match label count");
  }
  for (std::size_t y : labels) {
    if (y >= num_classes) {
      throw std::domain_error("Dataset: label " + std::to_string(y) + " out of range");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.num_classes = num_classes;
  out.features = Matrix(indices.size(), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const auto src = features.row(indices[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

Dataset gen_synthetic(std::size_t num_classes, std::size_t n_per_class, std::size_t dim,
                      double overlap, std::uint64_t seed) {
  if (num_classes < 2) {
    throw std::domain_error("gen_synthetic: need at least two classes");
  }
  if (n_per_class == 0) {
    throw std::domain_error("gen_synthetic: n_per_class must be positive");
  }
  if (dim < 2) {
    throw std::domain_error("gen_synthetic: dim must be at least 2");
  }
  if (!(overlap >= 0.0) || !std::isfinite(overlap)) {
    throw std::domain_error("gen_synthetic: overlap must be finite and non-negative");
  }

  std::mt19937_64 rng(seed);
  Matrix means(num_classes, dim);
  if (dim >= num_classes) {
    const auto frame = random_frame(num_classes, dim, rng);
    for (std::size_t k = 0; k < num_classes; ++k) {
      for (std::size_t j = 0; j < dim; ++j) {
        means(k, j) = kClusterScale * frame[k][j];
      }
    }
  } else {
    const auto plane = random_frame(2, dim, rng);
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(num_classes);
      for (std::size_t j = 0; j < dim; ++j) {
        means(k, j) =
            kClusterScale * (std::cos(angle) * plane[0][j] + std::sin(angle) * plane[1][j]);
      }
    }
  }

  Dataset data;
  data.num_classes = num_classes;
  data.features = Matrix(num_classes * n_per_class, dim);
  data.labels.reserve(num_classes * n_per_class);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::size_t row = 0;
  for (std::size_t k = 0; k < num_classes; ++k) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t j = 0; j < dim; ++j) {
        data.features(row, j) = means(k, j) + overlap * noise(rng);
      }
      data.labels.push_back(k);
    }
  }
  return data;
}

std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) {
      throw std::domain_error("split: ratios must be positive");
    }
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::domain_error("split: ratios must sum to 1");
  }

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    const double exact = ratios[s] * static_cast<double>(n);
    // Guard against 0.7 * 100 = 70.00000000000001 style noise.
    const double floor_part = std::floor(exact + 1e-9);
    sizes[s] = static_cast<std::size_t>(floor_part);
    remainder[s] = std::max(0.0, exact - floor_part);
    assigned += sizes[s];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) {
    ++sizes[order[i % 3]];
  }
  return sizes;
}

DatasetSplit split(const Dataset& dataset, const SplitSpec& spec) {
  dataset.validate();
  const auto sizes = split_sizes(dataset.size(), spec.ratios);
  for (std::size_t s : sizes) {
    if (s == 0) {
      throw std::domain_error("split: a split would be empty for n = " +
                              std::to_string(dataset.size()));
    }
  }
  const auto perm = shuffled_indices(dataset.size(), spec.seed);
  const std::span<const std::size_t> all(perm);
  DatasetSplit out;
  out.train = dataset.subset(all.subspan(0, sizes[0]));
  out.val = dataset.subset(all.subspan(sizes[0], sizes[1]));
  out.test = dataset.subset(all.subspan(sizes[0] + sizes[1], sizes[2]));
  return out;
}

}  // namespace calib
