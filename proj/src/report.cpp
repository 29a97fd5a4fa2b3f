#include "calib/report.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace calib {
namespace {

std::string shortest(double value) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  if (ec != std::errc()) {
    throw std::domain_error("cannot format number");
  }
  return {buf.data(), ptr};
}

double parse_displayed(const std::string& text) {
  double v = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), v);
  return v;
}

struct Column {
  std::string header;
  bool lower_is_better;
};

constexpr std::size_t kColumns = 5;

}  // namespace

void DiagramStyle::validate() const {
  if (width <= 0 || height <= 0) {
    throw std::domain_error("DiagramStyle: dimensions must be positive");
  }
  if (!(bar_opacity >= 0.0 && bar_opacity <= 1.0)) {
    throw std::domain_error("DiagramStyle: bar opacity must lie in [0, 1]");
  }
}

std::string format_fixed(double value, int decimals) {
  std::array<char, 64> buf{};
  if (value == 0.0) {
    value = 0.0;  // drop the sign of -0
  }
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value,
                                       std::chars_format::fixed, decimals);
  if (ec != std::errc()) {
    throw std::domain_error("format_fixed: value out of range");
  }
  std::string out(buf.data(), ptr);
  if (out.front() == '-' && out.find_first_not_of("-0.") == std::string::npos) {
    out.erase(0, 1);
  }
  return out;
}

std::string reliability_svg(const ReliabilityTable& table, const DiagramStyle& style) {
  style.validate();
  if (table.bins.empty()) {
    throw std::domain_error("reliability_svg: table has no bins");
  }
  const auto f = [](double v) { return format_fixed(v, 6); };
  const double left = 64.0;
  const double right = 20.0;
  const double top = 40.0;
  const double bottom = 60.0;
  const double plot_w = style.width - left - right;
  const double plot_h = style.height - top - bottom;
  if (plot_w <= 0.0 || plot_h <= 0.0) {
    throw std::domain_error("reliability_svg: canvas too small for the plot area");
  }
  const std::size_t m = table.bins.size();
  const double bin_w = 1.0 / static_cast<double>(m);

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << style.width
      << "\" height=\"" << style.height << "\" viewBox=\"0 0 " << style.width << ' '
      << style.height << "\">\n"
      << "<rect width=\"" << style.width << "\" height=\"" << style.height
      << "\" fill=\"#ffffff\"/>\n"
      << "<text x=\"" << f(left + plot_w / 2) << "\" y=\"" << f(top / 2 + 6)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">"
      << style.title << " (M = " << m << ")</text>\n";

  // Plot group: unit square, y pointing up.
  svg << "<g id=\"plot\" transform=\"translate(" << f(left) << ' ' << f(top + plot_h)
      << ") scale(" << f(plot_w) << ' ' << f(-plot_h) << ")\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"1\" height=\"1\" fill=\"none\" stroke=\"#808080\" "
         "vector-effect=\"non-scaling-stroke\"/>\n";
  for (std::size_t b = 0; b < m; ++b) {
    const auto& bin = table.bins[b];
    if (bin.count == 0) {
      continue;
    }
    const double x = static_cast<double>(b) * bin_w;
    svg << "<rect class=\"conf-bar\" data-bin=\"" << b << "\" x=\"" << f(x)
        << "\" y=\"0\" width=\"" << f(bin_w) << "\" height=\"" << f(bin.conf) << "\" fill=\""
        << style.confidence_color << "\" fill-opacity=\"" << f(style.bar_opacity) << "\"/>\n";
    svg << "<rect class=\"acc-bar\" data-bin=\"" << b << "\" x=\"" << f(x)
        << "\" y=\"0\" width=\"" << f(bin_w) << "\" height=\"" << f(bin.acc) << "\" fill=\""
        << style.accuracy_color << "\" fill-opacity=\"" << f(style.bar_opacity) << "\"/>\n";
  }
  svg << "<line class=\"diagonal\" x1=\"0\" y1=\"0\" x2=\"1\" y2=\"1\" stroke=\""
      << style.diagonal_color
      << "\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\" vector-effect=\"non-scaling-stroke\"/>\n";

  svg << "<polyline class=\"acc-curve\" fill=\"none\" stroke=\"" << style.curve_color
      << "\" stroke-width=\"2\" vector-effect=\"non-scaling-stroke\" points=\"";
  bool first = true;
  for (const auto& bin : table.bins) {
    if (bin.count == 0) {
      continue;
    }
    svg << (first ? "" : " ") << f(bin.conf) << ',' << f(bin.acc);
    first = false;
  }
  svg << "\"/>\n</g>\n";

  // Axes: ticks every 0.2 plus one tick per bin edge along x.
  svg << "<g font-family=\"sans-serif\" font-size=\"11\">\n";
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    svg << "<text x=\"" << f(left + v * plot_w) << "\" y=\"" << f(top + plot_h + 16)
        << "\" text-anchor=\"middle\">" << format_fixed(v, 1) << "</text>\n";
    svg << "<text x=\"" << f(left - 6) << "\" y=\"" << f(top + plot_h - v * plot_h + 4)
        << "\" text-anchor=\"end\">" << format_fixed(v, 1) << "</text>\n";
  }
  for (std::size_t b = 0; b <= m; ++b) {
    const double x = left + static_cast<double>(b) * bin_w * plot_w;
    svg << "<line x1=\"" << f(x) << "\" y1=\"" << f(top + plot_h) << "\" x2=\"" << f(x)
        << "\" y2=\"" << f(top + plot_h + 4) << "\" stroke=\"#808080\"/>\n";
  }
  svg << "<text x=\"" << f(left + plot_w / 2) << "\" y=\"" << f(top + plot_h + 40)
      << "\" text-anchor=\"middle\" font-size=\"13\">Confidence (" << m
      << " bins)</text>\n"
      << "<text transform=\"translate(" << f(18) << ' ' << f(top + plot_h / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"13\">Accuracy</text>\n"
      << "</g>\n</svg>\n";
  return svg.str();
}

void render_reliability_svg(const ReliabilityTable& table, const DiagramStyle& style,
                            const std::filesystem::path& out_path) {
  write_text_file(out_path, reliability_svg(table, style));
}

std::string comparison_table(std::span<const ComparisonEntry> entries) {
  if (entries.empty()) {
    throw std::domain_error("comparison_table: no entries");
  }
  static const std::array<Column, kColumns> columns{{
      {"P(%)", false},
      {"R(%)", false},
      {"F1(%)", false},
      {"ACC(%)", false},
      {"ECE", true},
  }};

  std::vector<std::array<std::string, kColumns>> cells;
  cells.reserve(entries.size());
  for (const auto& e : entries) {
    cells.push_back({format_fixed(e.report.macro_precision * 100.0, 2),
                     format_fixed(e.report.macro_recall * 100.0, 2),
                     format_fixed(e.report.macro_f1 * 100.0, 2),
                     format_fixed(e.report.accuracy * 100.0, 2), format_fixed(e.ece, 5)});
  }

  std::array<double, kColumns> best{};
  for (std::size_t c = 0; c < kColumns; ++c) {
    best[c] = parse_displayed(cells[0][c]);
    for (const auto& row : cells) {
      const double v = parse_displayed(row[c]);
      best[c] = columns[c].lower_is_better ? std::min(best[c], v) : std::max(best[c], v);
    }
  }

  std::ostringstream md;
  md << "| Model |";
  for (const auto& col : columns) {
    md << ' ' << col.header << " |";
  }
  md << "\n|---|";
  for (std::size_t c = 0; c < kColumns; ++c) {
    md << "---|";
  }
  md << '\n';
  for (std::size_t r = 0; r < entries.size(); ++r) {
    md << "| " << entries[r].name << " |";
    for (std::size_t c = 0; c < kColumns; ++c) {
      const bool bold = parse_displayed(cells[r][c]) == best[c];
      md << ' ' << (bold ? "**" + cells[r][c] + "**" : cells[r][c]) << " |";
    }
    md << '\n';
  }
  return md.str();
}

std::string format_predictions(std::span<const PredictionRecord> records, LogFormat format) {
  if (records.empty()) {
    throw std::domain_error("save_predictions: no records");
  }
  const std::size_t k = records.front().probs.size();
  std::string out;
  if (format == LogFormat::CSV) {
    for (std::size_t c = 0; c < k; ++c) {
      out += 'p' + std::to_string(c) + ',';
    }
    out += "label\n";
  }
  for (const auto& rec : records) {
    if (rec.probs.size() != k) {
      throw std::domain_error("save_predictions: records disagree on class count");
    }
    if (format == LogFormat::JSONL) {
      out += "{\"probs\":[";
      for (std::size_t c = 0; c < k; ++c) {
        out += (c ? "," : "") + shortest(rec.probs[c]);
      }
      out += "],\"label\":" + std::to_string(rec.true_class) + "}\n";
    } else {
      for (std::size_t c = 0; c < k; ++c) {
        out += shortest(rec.probs[c]) + ',';
      }
      out += std::to_string(rec.true_class) + '\n';
    }
  }
  return out;
}

void save_predictions(std::span<const PredictionRecord> records,
                      const std::filesystem::path& path, LogFormat format) {
  write_text_file(path, format_predictions(records, format));
}

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out << contents;
  out.flush();
  if (!out) {
    throw IoError("failed writing " + path.string());
  }
}

}  // namespace calib
