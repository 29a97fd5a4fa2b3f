#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "calib/dataset.hpp"
#include "calib/loss.hpp"
#include "calib/metrics.hpp"
#include "calib/model.hpp"

namespace calib {

enum class TrainMode {
  VanillaNLL,            // NLL only
  CalibratedCurriculum,  // NLL + ramped ECE-loss weight
  CalibratedFixed,       // NLL + constant gamma_e
};

std::string_view to_string(TrainMode mode);
// Accepts "vanilla", "curriculum" and "fixed".
TrainMode parse_train_mode(std::string_view name);

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::uint64_t seed = 0;
  LossConfig loss;
  TrainMode mode = TrainMode::CalibratedCurriculum;
  std::size_t hidden_dim = 0;
  std::size_t eval_bins = 15;

  // Also checks that loss.total_epochs matches epochs.
  void validate() const;
};

struct EpochStats {
  double nll = 0.0;
  double soft_ece = 0.0;
  double ece_weight = 0.0;
  double total = 0.0;
  double train_accuracy = 0.0;

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct EvalResult {
  ClassificationReport report;
  double ece = 0.0;
  ReliabilityTable table;
  std::vector<PredictionRecord> records;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  EvalResult final_eval;             // on the held-out split, M = eval_bins
  std::vector<double> epoch_seconds; // wall clock; excluded from determinism
};

// ECE-loss weight applied at `epoch` under the configured mode.
double applied_ece_weight(std::size_t epoch, const TrainConfig& config);

// Loss and parameter gradients for one batch at `epoch`.
std::pair<LossValue, ModelParams> backward(const ModelParams& params, const Matrix& features,
                                           std::span<const std::size_t> labels,
                                           std::size_t epoch, const TrainConfig& config);

// Seeded-shuffle mini-batch SGD for config.epochs epochs. The final partial
// batch is kept. Per-epoch statistics are batch-size-weighted means.
std::pair<ModelParams, TrainReport> train(const Dataset& train_set, const Dataset& val_set,
                                          const TrainConfig& config);

std::vector<PredictionRecord> predict(const ModelParams& params, const Dataset& data);

EvalResult evaluate(const ModelParams& params, const Dataset& data, std::size_t num_bins);
EvalResult evaluate(std::vector<PredictionRecord> records, std::size_t num_classes,
                    std::size_t num_bins);

// One vanilla epoch from a fresh model; returns the mean batch (nll, soft_ece).
std::pair<double, double> warmup_losses(const Dataset& train_set, const TrainConfig& config);

// gamma_e from the loss ratio of a vanilla warm-up epoch.
double resolve_auto_gamma(const Dataset& train_set, const TrainConfig& config);

}  // namespace calib
