#pragma once

#include <cstddef>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "calib/metrics.hpp"

namespace calib {

enum class LogFormat { JSONL, CSV };

std::string_view to_string(LogFormat format);
LogFormat parse_log_format(std::string_view name);

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Base for row-level problems in a prediction log. line() is 1-based.
class PredictionLogError : public std::runtime_error {
public:
  PredictionLogError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class MalformedRowError : public PredictionLogError {
public:
  using PredictionLogError::PredictionLogError;
};

class ProbabilitySumError : public PredictionLogError {
public:
  using PredictionLogError::PredictionLogError;
};

class LabelRangeError : public PredictionLogError {
public:
  using PredictionLogError::PredictionLogError;
};

// Probability vectors within this distance of summing to 1 are renormalized;
// anything further off is rejected.
inline constexpr double kProbabilitySumTolerance = 1e-3;

// Reads a JSONL ({"probs": [...], "label": k} per line) or CSV
// (header p0,...,p{K-1},label) prediction log. predicted_class and
// confidence are always recomputed from the probabilities.
std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path,
                                               LogFormat format);

}  // namespace calib
