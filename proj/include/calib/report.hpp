#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "calib/metrics.hpp"
#include "calib/predictions_io.hpp"

namespace calib {

struct DiagramStyle {
  int width = 480;
  int height = 480;
  std::string confidence_color = "#f4a6c6";  // pink
  std::string accuracy_color = "#8e6bbf";    // purple
  std::string diagonal_color = "#000000";
  std::string curve_color = "#d62728";       // red
  double bar_opacity = 0.6;
  std::string title = "Reliability diagram";

  void validate() const;
};

// Fixed-point decimal rendering independent of the global locale.
std::string format_fixed(double value, int decimals);

// Standalone SVG 1.1 document. Inside the plot group one unit is the full
// [0, 1] range on each axis, so bar heights in the file are the bin's conf
// and acc values. Empty bins draw nothing and the red curve joins
// (conf, acc) over non-empty bins only.
std::string reliability_svg(const ReliabilityTable& table, const DiagramStyle& style);

// Writes reliability_svg to `out_path`; throws IoError when unwritable.
void render_reliability_svg(const ReliabilityTable& table, const DiagramStyle& style,
                            const std::filesystem::path& out_path);

struct ComparisonEntry {
  std::string name;
  ClassificationReport report;
  double ece = 0.0;
};

// Markdown table: Model | P(%) | R(%) | F1(%) | ACC(%) | ECE. Percentages
// carry 2 decimals and ECE 5; the best displayed value in each column is
// bolded (highest, lowest for ECE), every tied entry included.
std::string comparison_table(std::span<const ComparisonEntry> entries);

// Serializes records in the schema load_predictions reads. Probabilities
// use the shortest round-trip representation.
std::string format_predictions(std::span<const PredictionRecord> records, LogFormat format);
void save_predictions(std::span<const PredictionRecord> records,
                      const std::filesystem::path& path, LogFormat format);

// Writes `contents` to `path`, throwing IoError on failure.
void write_text_file(const std::filesystem::path& path, const std::string& contents);

}  // namespace calib
