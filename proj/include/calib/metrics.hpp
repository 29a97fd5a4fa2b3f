#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace calib {

// One classified sample: the probability vector, the class it predicts and
// with what confidence, and the label it should have predicted.
struct PredictionRecord {
  std::vector<double> probs;
  std::size_t predicted_class = 0;
  double confidence = 0.0;
  std::size_t true_class = 0;

  friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

// Builds a record from a probability vector, deriving the predicted class
// (lowest index wins ties) and confidence. Throws std::domain_error when the
// vector is not a distribution within 1e-9 or the label is out of range.
PredictionRecord make_record(std::vector<double> probs, std::size_t true_class);

// Index of the lowest-index maximum.
std::size_t argmax(std::span<const double> values);

struct ReliabilityBin {
  std::size_t count = 0;
  double acc = 0.0;
  double conf = 0.0;

  friend bool operator==(const ReliabilityBin&, const ReliabilityBin&) = default;
};

// Equal-width confidence histogram. Bin m covers (m/M, (m+1)/M]; empty bins
// hold zeros.
struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  std::size_t n = 0;

  std::size_t num_bins() const { return bins.size(); }

  friend bool operator==(const ReliabilityTable&, const ReliabilityTable&) = default;
};

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassificationReport {
  std::vector<ClassMetrics> per_class;
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

// Maps a confidence to its bin: the m with confidence in (m/M, (m+1)/M].
// Confidence 0 goes to bin 0. Bin edges are evaluated as double(m)/M so
// the result agrees with a direct interval-membership test.
std::size_t bin_index(double confidence, std::size_t num_bins);

ReliabilityTable build_reliability_table(std::span<const PredictionRecord> records,
                                         std::size_t num_bins);

// Expected calibration error: sum over bins of (count/n)*|acc - conf|.
double ece(const ReliabilityTable& table);

// Macro-averaged precision/recall/F1 over `num_classes` classes plus plain
// accuracy. Zero denominators score 0.
ClassificationReport classification_report(std::span<const PredictionRecord> records,
                                           std::size_t num_classes);

}  // namespace calib
