#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "calib/dataset.hpp"
#include "calib/trainer.hpp"

namespace calib {

inline constexpr std::string_view kVersion = "0.1.0";

// Everything a training run depends on. Serialized verbatim into run.json,
// so a manifest alone reproduces the run.
struct RunOptions {
  // synthetic data
  std::size_t classes = 4;
  std::size_t per_class = 500;
  std::size_t dim = 8;
  double overlap = 1.5;
  SplitSpec split;  // split.seed is overwritten by the run seed

  // training
  TrainMode mode = TrainMode::CalibratedCurriculum;
  std::optional<double> gamma;  // empty: resolve with auto_gamma
  std::size_t s_e = 0;
  std::size_t epochs = 50;
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t hidden_dim = 0;
  IndicatorVariant variant = IndicatorVariant::MaxProb;
  std::size_t train_bins = 10;
  std::size_t eval_bins = 15;
  std::uint64_t seed = 0;
};

struct RunResult {
  TrainConfig config;  // with gamma_e resolved
  TrainReport report;  // final_eval is on the validation split
  EvalResult test;     // held-out test split
};

// Generates the dataset, splits it, resolves gamma and trains one arm.
DatasetSplit make_data(const RunOptions& options);
TrainConfig resolve_config(const RunOptions& options, const Dataset& train_set);
RunResult run_training(const RunOptions& options);

// Writes run.json, report.json, predictions.jsonl and reliability.svg
// under `dir`, creating it if needed.
void write_run(const RunOptions& options, const RunResult& result,
               const std::filesystem::path& dir);

// Entry point for the `calib` executable. `args` excludes the program name.
// Returns 0 on success, 1 on a domain or I/O error, 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace calib
