#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "calib/matrix.hpp"

namespace calib {

struct Dataset {
  Matrix features;  // n x d
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }

  // Throws std::domain_error unless rows match labels and labels are < K.
  void validate() const;

  // Rows at the given indices, in order.
  Dataset subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct SplitSpec {
  std::array<double, 3> ratios{0.7, 0.2, 0.1};  // train, val, test
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

// Distance of each class mean from the origin-centred simplex; the
// per-class standard deviation (`overlap`) is relative to this.
inline constexpr double kClusterScale = 3.0;

// K isotropic Gaussian clusters of n_per_class points each, standard
// deviation `overlap`. When dim >= K the means are the vertices of a scaled
// regular simplex (kClusterScale times an orthonormal K-frame, so every pair
// sits kClusterScale*sqrt(2) apart); with fewer dimensions they form a
// regular K-gon of radius kClusterScale in a plane. The frame is drawn from
// `seed`. Rows are grouped by class.
Dataset gen_synthetic(std::size_t num_classes, std::size_t n_per_class, std::size_t dim,
                      double overlap, std::uint64_t seed);

// Split sizes by largest-remainder rounding of ratio * n. Ties in the
// remainder go to the earlier split.
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& ratios);

// Seeded shuffle, then contiguous cut into train/val/test.
DatasetSplit split(const Dataset& dataset, const SplitSpec& spec);

}  // namespace calib
