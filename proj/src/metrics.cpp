#include "calib/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace calib {

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values.size(); ++k) {
    if (values[k] > values[best]) {
      best = k;
    }
  }
  return best;
}

PredictionRecord make_record(std::vector<double> probs, std::size_t true_class) {
  if (probs.empty()) {
    throw std::domain_error("make_record: empty probability vector");
  }
  if (true_class >= probs.size()) {
    throw std::domain_error("make_record: label " + std::to_string(true_class) +
                            " out of range for K=" + std::to_string(probs.size()));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) {
      throw std::domain_error("make_record: negative or NaN probability");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw std::domain_error("make_record: probabilities sum to " + std::to_string(sum));
  }
  PredictionRecord rec;
  rec.predicted_class = argmax(probs);
  rec.confidence = probs[rec.predicted_class];
  rec.true_class = true_class;
  rec.probs = std::move(probs);
  return rec;
}

std::size_t bin_index(double confidence, std::size_t num_bins) {
  if (num_bins == 0) {
    throw std::domain_error("bin_index: bin count must be positive");
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw std::domain_error("bin_index: confidence outside [0, 1]");
  }
  if (confidence == 0.0) {
    return 0;
  }
  const auto m_count = static_cast<double>(num_bins);
  // Upper edge index in [1, M]; the product can be off by one ulp near an
  // edge, so settle against the exact edge values.
  auto upper = static_cast<std::size_t>(std::ceil(confidence * m_count));
  upper = std::clamp<std::size_t>(upper, 1, num_bins);
  while (upper > 1 && confidence <= static_cast<double>(upper - 1) / m_count) {
    --upper;
  }
  while (upper < num_bins && confidence > static_cast<double>(upper) / m_count) {
    ++upper;
  }
  return upper - 1;
}

ReliabilityTable build_reliability_table(std::span<const PredictionRecord> records,
                                         std::size_t num_bins) {
  if (records.empty()) {
    throw std::domain_error("build_reliability_table: no records");
  }
  if (num_bins == 0) {
    throw std::domain_error("build_reliability_table: bin count must be positive");
  }
  const std::size_t k = records.front().probs.size();
  std::vector<std::size_t> correct(num_bins, 0);
  std::vector<double> conf_sum(num_bins, 0.0);
  ReliabilityTable table;
  table.bins.resize(num_bins);
  table.n = records.size();
  for (const auto& rec : records) {
    if (rec.probs.size() != k) {
      throw std::domain_error("build_reliability_table: records disagree on class count");
    }
    const std::size_t b = bin_index(rec.confidence, num_bins);
    ++table.bins[b].count;
    conf_sum[b] += rec.confidence;
    if (rec.predicted_class == rec.true_class) {
      ++correct[b];
    }
  }
  for (std::size_t b = 0; b < num_bins; ++b) {
    auto& bin = table.bins[b];
    if (bin.count == 0) {
      continue;
    }
    const auto cnt = static_cast<double>(bin.count);
    bin.acc = static_cast<double>(correct[b]) / cnt;
    bin.conf = conf_sum[b] / cnt;
  }
  return table;
}

double ece(const ReliabilityTable& table) {
  if (table.n == 0) {
    throw std::domain_error("ece: table holds no samples");
  }
  const auto n = static_cast<double>(table.n);
  double total = 0.0;
  for (const auto& bin : table.bins) {
    if (bin.count == 0) {
      continue;
    }
    total += static_cast<double>(bin.count) / n * std::abs(bin.acc - bin.conf);
  }
  return total;
}

ClassificationReport classification_report(std::span<const PredictionRecord> records,
                                           std::size_t num_classes) {
  if (records.empty()) {
    throw std::domain_error("classification_report: no records");
  }
  if (num_classes == 0) {
    throw std::domain_error("classification_report: class count must be positive");
  }
  std::vector<std::size_t> tp(num_classes, 0);
  std::vector<std::size_t> predicted(num_classes, 0);
  std::vector<std::size_t> actual(num_classes, 0);
  std::size_t correct = 0;
  for (const auto& rec : records) {
    if (rec.predicted_class >= num_classes || rec.true_class >= num_classes) {
      throw std::domain_error("classification_report: class index out of range");
    }
    ++predicted[rec.predicted_class];
    ++actual[rec.true_class];
    if (rec.predicted_class == rec.true_class) {
      ++tp[rec.true_class];
      ++correct;
    }
  }

  ClassificationReport report;
  report.per_class.resize(num_classes);
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto& m = report.per_class[c];
    const auto hits = static_cast<double>(tp[c]);
    m.precision = predicted[c] ? hits / static_cast<double>(predicted[c]) : 0.0;
    m.recall = actual[c] ? hits / static_cast<double>(actual[c]) : 0.0;
    const double denom = m.precision + m.recall;
    m.f1 = denom > 0.0 ? 2.0 * m.precision * m.recall / denom : 0.0;
    report.macro_precision += m.precision;
    report.macro_recall += m.recall;
    report.macro_f1 += m.f1;
  }
  const auto kc = static_cast<double>(num_classes);
  report.macro_precision /= kc;
  report.macro_recall /= kc;
  report.macro_f1 /= kc;
  report.accuracy = static_cast<double>(correct) / static_cast<double>(records.size());
  return report;
}

}  // namespace calib
