#include "calib/predictions_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <json.hpp>

namespace calib {
namespace {

PredictionRecord finish_record(std::vector<double> probs, long long label, std::size_t line,
                               std::size_t& expected_k) {
  if (probs.size() < 2) {
    throw MalformedRowError(line, "need at least two probabilities");
  }
  if (expected_k == 0) {
    expected_k = probs.size();
  } else if (probs.size() != expected_k) {
    throw MalformedRowError(line, "expected " + std::to_string(expected_k) +
                                      " probabilities, found " + std::to_string(probs.size()));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0) {
      throw MalformedRowError(line, "probabilities must be finite and non-negative");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > kProbabilitySumTolerance) {
    throw ProbabilitySumError(line, "probabilities sum to " + std::to_string(sum));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size()) {
    throw LabelRangeError(line, "label " + std::to_string(label) + " outside [0, " +
                                    std::to_string(probs.size()) + ")");
  }
  for (double& p : probs) {
    p /= sum;
  }
  PredictionRecord rec;
  rec.predicted_class = argmax(probs);
  rec.confidence = probs[rec.predicted_class];
  rec.true_class = static_cast<std::size_t>(label);
  rec.probs = std::move(probs);
  return rec;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) {
    s.remove_suffix(1);
  }
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& value) {
  if (!text.empty() && text.front() == '+') {
    text.remove_prefix(1);
  }
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  return ec == std::errc() && ptr == text.data() + text.size() && !text.empty();
}

PredictionRecord parse_jsonl_row(std::string_view line, std::size_t line_no,
                                 std::size_t& expected_k) {
  const auto row = nlohmann::json::parse(line.begin(), line.end(), nullptr, false);
  if (row.is_discarded() || !row.is_object()) {
    throw MalformedRowError(line_no, "not a JSON object");
  }
  const auto probs_it = row.find("probs");
  const auto label_it = row.find("label");
  if (probs_it == row.end() || !probs_it->is_array()) {
    throw MalformedRowError(line_no, "missing \"probs\" array");
  }
  if (label_it == row.end() || !label_it->is_number_integer()) {
    throw MalformedRowError(line_no, "missing integer \"label\"");
  }
  std::vector<double> probs;
  probs.reserve(probs_it->size());
  for (const auto& p : *probs_it) {
    if (!p.is_number()) {
      throw MalformedRowError(line_no, "non-numeric probability");
    }
    probs.push_back(p.get<double>());
  }
  return finish_record(std::move(probs), label_it->get<long long>(), line_no, expected_k);
}

void check_csv_header(std::string_view line) {
  const auto cols = split_commas(trim(line));
  if (cols.size() < 3 || cols.back() != "label") {
    throw MalformedRowError(1, "CSV header must be p0,...,p{K-1},label");
  }
  for (std::size_t k = 0; k + 1 < cols.size(); ++k) {
    if (cols[k] != "p" + std::to_string(k)) {
      throw MalformedRowError(1, "CSV header column " + std::to_string(k) + " must be p" +
                                     std::to_string(k));
    }
  }
}

PredictionRecord parse_csv_row(std::string_view line, std::size_t line_no,
                               std::size_t& expected_k) {
  const auto cols = split_commas(line);
  if (cols.size() != expected_k + 1) {
    throw MalformedRowError(line_no, "expected " + std::to_string(expected_k + 1) +
                                         " columns, found " + std::to_string(cols.size()));
  }
  std::vector<double> probs(expected_k);
  for (std::size_t k = 0; k < expected_k; ++k) {
    if (!parse_number(cols[k], probs[k])) {
      throw MalformedRowError(line_no, "bad probability '" + std::string(cols[k]) + "'");
    }
  }
  long long label = 0;
  if (!parse_number(cols.back(), label)) {
    throw MalformedRowError(line_no, "bad label '" + std::string(cols.back()) + "'");
  }
  return finish_record(std::move(probs), label, line_no, expected_k);
}

}  // namespace

std::string_view to_string(LogFormat format) {
  return format == LogFormat::JSONL ? "jsonl" : "csv";
}

LogFormat parse_log_format(std::string_view name) {
  if (name == "jsonl") return LogFormat::JSONL;
  if (name == "csv") return LogFormat::CSV;
  throw std::domain_error("unknown prediction log format: " + std::string(name));
}

std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path,
                                               LogFormat format) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open prediction log " + path.string());
  }
  std::vector<PredictionRecord> records;
  std::size_t expected_k = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (format == LogFormat::CSV && line_no == 1) {
      check_csv_header(text);
      expected_k = split_commas(text).size() - 1;
      continue;
    }
    if (text.empty()) {
      continue;
    }
    records.push_back(format == LogFormat::JSONL ? parse_jsonl_row(text, line_no, expected_k)
                                                 : parse_csv_row(text, line_no, expected_k));
  }
  if (format == LogFormat::CSV && line_no == 0) {
    throw MalformedRowError(1, "missing CSV header");
  }
  return records;
}

}  // namespace calib
