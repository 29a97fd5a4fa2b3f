#include "calib/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "calib/predictions_io.hpp"
#include "calib/report.hpp"
#include "calib/shuffle.hpp"

namespace calib {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Stream ids for deriving the split and training seeds from the run seed,
// so the data generator, the split permutation and the trainer never share
// a random sequence.
constexpr std::uint64_t kSplitStream = 0x5000'0000ULL;
constexpr std::uint64_t kTrainStream = 0x5000'0001ULL;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- manifest -------------------------------------------------------------

json options_to_json(const RunOptions& o) {
  json gamma = o.gamma ? json(*o.gamma) : json("auto");
  return {
      {"data",
       {{"source", "synth"},
        {"classes", o.classes},
        {"per_class", o.per_class},
        {"dim", o.dim},
        {"overlap", o.overlap},
        {"split", o.split.ratios}}},
      {"train",
       {{"mode", to_string(o.mode)},
        {"gamma", gamma},
        {"s_e", o.s_e},
        {"epochs", o.epochs},
        {"lr", o.learning_rate},
        {"batch", o.batch_size},
        {"hidden", o.hidden_dim},
        {"variant", to_string(o.variant)},
        {"train_bins", o.train_bins},
        {"eval_bins", o.eval_bins}}},
  };
}

RunOptions options_from_json(const json& config) {
  RunOptions o;
  const auto& d = config.at("data");
  if (d.at("source").get<std::string>() != "synth") {
    throw std::domain_error("manifest: only synthetic data is supported");
  }
  o.classes = d.at("classes").get<std::size_t>();
  o.per_class = d.at("per_class").get<std::size_t>();
  o.dim = d.at("dim").get<std::size_t>();
  o.overlap = d.at("overlap").get<double>();
  o.split.ratios = d.at("split").get<std::array<double, 3>>();

  const auto& t = config.at("train");
  o.mode = parse_train_mode(t.at("mode").get<std::string>());
  const auto& gamma = t.at("gamma");
  if (gamma.is_string()) {
    if (gamma.get<std::string>() != "auto") {
      throw std::domain_error("manifest: gamma must be a number or \"auto\"");
    }
    o.gamma.reset();
  } else {
    o.gamma = gamma.get<double>();
  }
  o.s_e = t.at("s_e").get<std::size_t>();
  o.epochs = t.at("epochs").get<std::size_t>();
  o.learning_rate = t.at("lr").get<double>();
  o.batch_size = t.at("batch").get<std::size_t>();
  o.hidden_dim = t.at("hidden").get<std::size_t>();
  o.variant = parse_indicator_variant(t.at("variant").get<std::string>());
  o.train_bins = t.at("train_bins").get<std::size_t>();
  o.eval_bins = t.at("eval_bins").get<std::size_t>();
  return o;
}

json manifest(std::string_view command, std::uint64_t seed, json config, json resolved,
              std::vector<std::string> outputs) {
  return {{"tool", "calib"},
          {"version", kVersion},
          {"command", command},
          {"seed", seed},
          {"config", std::move(config)},
          {"resolved", std::move(resolved)},
          {"outputs", std::move(outputs)}};
}

void write_json(const fs::path& path, const json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  const json value = json::parse(in, nullptr, false);
  if (value.is_discarded()) {
    throw std::domain_error(path.string() + " is not valid JSON");
  }
  return value;
}

// <name>.svg -> <name>.run.json next to it.
fs::path sidecar_manifest(const fs::path& output) {
  fs::path p = output;
  p.replace_extension(".run.json");
  return p;
}

// ---- reports --------------------------------------------------------------

json eval_to_json(const EvalResult& e) {
  json per_class = json::array();
  for (const auto& c : e.report.per_class) {
    per_class.push_back({{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}});
  }
  json bins = json::array();
  for (const auto& b : e.table.bins) {
    bins.push_back({{"count", b.count}, {"acc", b.acc}, {"conf", b.conf}});
  }
  return {{"n", e.table.n},
          {"accuracy", e.report.accuracy},
          {"macro_precision", e.report.macro_precision},
          {"macro_recall", e.report.macro_recall},
          {"macro_f1", e.report.macro_f1},
          {"ece", e.ece},
          {"bins", e.table.num_bins()},
          {"per_class", per_class},
          {"reliability", bins}};
}

ComparisonEntry entry_from_report(const fs::path& run_dir) {
  const json report = read_json(run_dir / "report.json");
  const auto& test = report.at("test");
  ComparisonEntry e;
  fs::path normal = run_dir.lexically_normal();
  e.name = normal.has_filename() ? normal.filename().string()
                                 : normal.parent_path().filename().string();
  e.report.accuracy = test.at("accuracy").get<double>();
  e.report.macro_precision = test.at("macro_precision").get<double>();
  e.report.macro_recall = test.at("macro_recall").get<double>();
  e.report.macro_f1 = test.at("macro_f1").get<double>();
  e.ece = test.at("ece").get<double>();
  return e;
}

void print_metrics(std::ostream& out, const EvalResult& e) {
  out << "records: " << e.table.n << '\n'
      << "bins: " << e.table.num_bins() << '\n'
      << "ECE: " << format_fixed(e.ece, 5) << '\n'
      << "ACC(%): " << format_fixed(e.report.accuracy * 100.0, 2) << '\n'
      << "P(%): " << format_fixed(e.report.macro_precision * 100.0, 2) << '\n'
      << "R(%): " << format_fixed(e.report.macro_recall * 100.0, 2) << '\n'
      << "F1(%): " << format_fixed(e.report.macro_f1 * 100.0, 2) << '\n';
}

void print_epochs(std::ostream& out, const TrainReport& report) {
  for (std::size_t e = 0; e < report.epochs.size(); ++e) {
    const auto& s = report.epochs[e];
    out << "epoch " << e + 1 << '/' << report.epochs.size() << "  nll "
        << format_fixed(s.nll, 5) << "  soft_ece " << format_fixed(s.soft_ece, 5)
        << "  weight " << format_fixed(s.ece_weight, 5) << "  train_acc "
        << format_fixed(s.train_accuracy * 100.0, 2) << "%  ("
        << format_fixed(report.epoch_seconds[e], 3) << "s)\n";
  }
}

// ---- flag plumbing --------------------------------------------------------

// Raw command-line values for the training flags. Only flags the user
// actually passed override the base options (defaults or a manifest).
struct TrainFlags {
  RunOptions defaults;
  std::string data = "synth";
  std::size_t classes = defaults.classes;
  std::size_t per_class = defaults.per_class;
  std::size_t dim = defaults.dim;
  double overlap = defaults.overlap;
  std::string mode = std::string(to_string(defaults.mode));
  std::string gamma = "auto";
  std::size_t s_e = defaults.s_e;
  std::size_t epochs = defaults.epochs;
  double lr = defaults.learning_rate;
  std::size_t batch = defaults.batch_size;
  std::size_t hidden = defaults.hidden_dim;
  std::string variant = std::string(to_string(defaults.variant));
  std::size_t train_bins = defaults.train_bins;
  std::size_t eval_bins = defaults.eval_bins;
  std::uint64_t seed = 0;
  std::string from_manifest;
  std::string out;
  bool quiet = false;
};

void add_train_flags(CLI::App* sub, TrainFlags& f, bool with_mode) {
  sub->add_option("--data", f.data, "Data source")
      ->check(CLI::IsMember({"synth"}))
      ->capture_default_str();
  sub->add_option("--classes", f.classes, "Number of classes K")
      ->check(CLI::Range(2, 1000))
      ->capture_default_str();
  sub->add_option("--per-class", f.per_class, "Samples per class")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--dim", f.dim, "Feature dimension")
      ->check(CLI::Range(2, 100000))
      ->capture_default_str();
  sub->add_option("--overlap", f.overlap, "Per-class standard deviation")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  if (with_mode) {
    sub->add_option("--mode", f.mode, "Training mode")
        ->check(CLI::IsMember({"vanilla", "curriculum", "fixed"}))
        ->capture_default_str();
  }
  sub->add_option("--gamma", f.gamma, "ECE-loss weight, or 'auto' for the warm-up loss ratio")
      ->capture_default_str();
  sub->add_option("--se", f.s_e, "Epoch at which the ECE loss enters")->capture_default_str();
  sub->add_option("--epochs", f.epochs, "Training epochs N")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--lr", f.lr, "SGD learning rate")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--batch", f.batch, "Mini-batch size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--hidden", f.hidden, "Hidden units (0 for a linear model)")
      ->capture_default_str();
  sub->add_option("--variant", f.variant, "Probability fed to the soft indicator")
      ->check(CLI::IsMember({"max_prob", "true_class_prob"}))
      ->capture_default_str();
  sub->add_option("--train-bins", f.train_bins, "Bins used by the ECE loss")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--eval-bins", f.eval_bins, "Bins used for reported ECE")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--seed", f.seed, "Run seed (falls back to CALIB_SEED, then 0)");
  sub->add_option("--from-manifest", f.from_manifest,
                  "Start from the config in a run.json; explicit flags still override")
      ->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "Output directory")->required();
  sub->add_flag("--quiet", f.quiet, "Do not print per-epoch statistics");
}

std::optional<double> parse_gamma(const std::string& text) {
  if (text == "auto") {
    return std::nullopt;
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(value) ||
      value < 0.0) {
    throw UsageError("--gamma: expected 'auto' or a non-negative number, got '" + text + "'");
  }
  return value;
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("CALIB_SEED");
  if (raw == nullptr || *raw == '\0') {
    return std::nullopt;
  }
  const std::string_view text(raw);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw UsageError("CALIB_SEED must be an unsigned integer, got '" + std::string(text) + "'");
  }
  return value;
}

// Seed precedence: --seed, then the manifest, then CALIB_SEED, then 0.
std::uint64_t pick_seed(const CLI::App* sub, std::uint64_t flag,
                        std::optional<std::uint64_t> from_manifest) {
  if (sub->count("--seed") > 0) {
    return flag;
  }
  if (from_manifest) {
    return *from_manifest;
  }
  return env_seed().value_or(0);
}

RunOptions build_options(const CLI::App* sub, const TrainFlags& f) {
  RunOptions o;
  std::optional<std::uint64_t> manifest_seed;
  if (!f.from_manifest.empty()) {
    const json m = read_json(f.from_manifest);
    o = options_from_json(m.at("config"));
    manifest_seed = m.at("seed").get<std::uint64_t>();
  }
  const auto given = [&](const char* name) { return sub->count(name) > 0; };
  if (given("--classes")) o.classes = f.classes;
  if (given("--per-class")) o.per_class = f.per_class;
  if (given("--dim")) o.dim = f.dim;
  if (given("--overlap")) o.overlap = f.overlap;
  if (sub->get_option_no_throw("--mode") != nullptr && given("--mode")) {
    o.mode = parse_train_mode(f.mode);
  }
  if (given("--gamma") || f.from_manifest.empty()) o.gamma = parse_gamma(f.gamma);
  if (given("--se")) o.s_e = f.s_e;
  if (given("--epochs")) o.epochs = f.epochs;
  if (given("--lr")) o.learning_rate = f.lr;
  if (given("--batch")) o.batch_size = f.batch;
  if (given("--hidden")) o.hidden_dim = f.hidden;
  if (given("--variant")) o.variant = parse_indicator_variant(f.variant);
  if (given("--train-bins")) o.train_bins = f.train_bins;
  if (given("--eval-bins")) o.eval_bins = f.eval_bins;
  o.seed = pick_seed(sub, f.seed, manifest_seed);
  return o;
}

LogFormat pick_format(const CLI::App* sub, const std::string& flag, const fs::path& file) {
  if (sub->count("--format") > 0) {
    return parse_log_format(flag);
  }
  return file.extension() == ".csv" ? LogFormat::CSV : LogFormat::JSONL;
}

// ---- subcommands ----------------------------------------------------------

void cmd_train(const CLI::App* sub, const TrainFlags& f, std::ostream& out) {
  const RunOptions options = build_options(sub, f);
  const RunResult result = run_training(options);
  if (!f.quiet) {
    print_epochs(out, result.report);
  }
  out << "mode: " << to_string(options.mode) << "  gamma_e: " << result.config.loss.gamma_e
      << '\n';
  print_metrics(out, result.test);
  write_run(options, result, f.out);
  out << "wrote " << f.out << '\n';
}

void cmd_experiment(const CLI::App* sub, const TrainFlags& f, std::ostream& out) {
  RunOptions base = build_options(sub, f);
  const fs::path dir = f.out;
  std::vector<ComparisonEntry> entries;
  std::vector<std::string> outputs;
  for (auto mode :
       {TrainMode::VanillaNLL, TrainMode::CalibratedCurriculum, TrainMode::CalibratedFixed}) {
    RunOptions arm = base;
    arm.mode = mode;
    const RunResult result = run_training(arm);
    const std::string name(to_string(mode));
    out << "== " << name << " (gamma_e " << result.config.loss.gamma_e << ")\n";
    if (!f.quiet) {
      print_epochs(out, result.report);
    }
    write_run(arm, result, dir / name);
    entries.push_back({name, result.test.report, result.test.ece});
    outputs.push_back(name + "/");
  }
  const std::string table = comparison_table(entries);
  write_text_file(dir / "comparison.md", table);
  outputs.push_back("comparison.md");
  base.mode = TrainMode::CalibratedCurriculum;
  json config = options_to_json(base);
  config["train"].erase("mode");
  write_json(dir / "run.json",
             manifest("experiment", base.seed, std::move(config),
                      {{"arms", {"vanilla", "curriculum", "fixed"}}}, outputs));
  out << table;
}

struct PredictionFlags {
  std::string predictions;
  std::string format = "jsonl";
  std::size_t bins = 15;
  std::string diagram;
  std::string title = DiagramStyle{}.title;
  std::uint64_t seed = 0;
};

void add_prediction_flags(CLI::App* sub, PredictionFlags& f) {
  sub->add_option("--predictions", f.predictions, "Prediction log (JSONL or CSV)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--format", f.format, "Log format (default: from the file extension)")
      ->check(CLI::IsMember({"jsonl", "csv"}));
  sub->add_option("--bins", f.bins, "Number of equal-width confidence bins M")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--title", f.title, "Diagram title")->capture_default_str();
  sub->add_option("--seed", f.seed, "Recorded in the manifest; evaluation is deterministic");
}

EvalResult evaluate_log(const CLI::App* sub, const PredictionFlags& f) {
  const fs::path path = f.predictions;
  auto records = load_predictions(path, pick_format(sub, f.format, path));
  if (records.empty()) {
    throw std::domain_error(path.string() + " contains no predictions");
  }
  const std::size_t k = records.front().probs.size();
  return evaluate(std::move(records), k, f.bins);
}

void write_diagram(const CLI::App* sub, const PredictionFlags& f, std::string_view command,
                   const EvalResult& result, const fs::path& svg) {
  DiagramStyle style;
  style.title = f.title;
  render_reliability_svg(result.table, style, svg);
  const json config = {{"predictions", f.predictions},
                       {"format", to_string(pick_format(sub, f.format, f.predictions))},
                       {"bins", f.bins},
                       {"title", f.title},
                       {"out", svg.filename().string()}};
  write_json(sidecar_manifest(svg),
             manifest(command, pick_seed(sub, f.seed, std::nullopt), config,
                      {{"ece", result.ece}, {"records", result.table.n}},
                      {svg.filename().string()}));
}

void cmd_eval(const CLI::App* sub, const PredictionFlags& f, std::ostream& out) {
  const EvalResult result = evaluate_log(sub, f);
  print_metrics(out, result);
  if (!f.diagram.empty()) {
    write_diagram(sub, f, "eval", result, f.diagram);
    out << "wrote " << f.diagram << '\n';
  }
}

void cmd_diagram(const CLI::App* sub, const PredictionFlags& f, std::ostream& out) {
  const EvalResult result = evaluate_log(sub, f);
  write_diagram(sub, f, "diagram", result, f.diagram);
  out << "wrote " << f.diagram << '\n';
}

void cmd_compare(const std::vector<std::string>& dirs, const std::string& out_file,
                 std::ostream& out) {
  std::vector<ComparisonEntry> entries;
  for (const auto& d : dirs) {
    entries.push_back(entry_from_report(d));
  }
  const std::string table = comparison_table(entries);
  out << table;
  if (!out_file.empty()) {
    const fs::path path = out_file;
    write_text_file(path, table);
    write_json(sidecar_manifest(path),
               manifest("compare", 0, {{"runs", dirs}}, json::object(),
                        {path.filename().string()}));
  }
}

}  // namespace

DatasetSplit make_data(const RunOptions& o) {
  const Dataset data = gen_synthetic(o.classes, o.per_class, o.dim, o.overlap, o.seed);
  SplitSpec spec = o.split;
  spec.seed = mix_seed(o.seed, kSplitStream);
  return split(data, spec);
}

TrainConfig resolve_config(const RunOptions& o, const Dataset& train_set) {
  TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.seed = mix_seed(o.seed, kTrainStream);
  cfg.mode = o.mode;
  cfg.hidden_dim = o.hidden_dim;
  cfg.eval_bins = o.eval_bins;
  cfg.loss.s_e = o.s_e;
  cfg.loss.total_epochs = o.epochs;
  cfg.loss.m_train = o.train_bins;
  cfg.loss.indicator_variant = o.variant;
  if (o.gamma) {
    cfg.loss.gamma_e = *o.gamma;
  } else {
    cfg.loss.gamma_e = 1.0;  // placeholder so the warm-up config validates
    cfg.loss.gamma_e = resolve_auto_gamma(train_set, cfg);
  }
  cfg.validate();
  return cfg;
}

RunResult run_training(const RunOptions& options) {
  const DatasetSplit data = make_data(options);
  RunResult result;
  result.config = resolve_config(options, data.train);
  auto [params, report] = train(data.train, data.val, result.config);
  result.report = std::move(report);
  result.test = evaluate(params, data.test, options.eval_bins);
  return result;
}

void write_run(const RunOptions& options, const RunResult& result, const fs::path& dir) {
  fs::create_directories(dir);

  json epochs = json::array();
  json schedule = json::array();
  for (const auto& e : result.report.epochs) {
    epochs.push_back({{"nll", e.nll},
                      {"soft_ece", e.soft_ece},
                      {"ece_weight", e.ece_weight},
                      {"total", e.total},
                      {"train_accuracy", e.train_accuracy}});
    schedule.push_back(e.ece_weight);
  }
  const json report = {{"mode", to_string(result.config.mode)},
                       {"gamma_e", result.config.loss.gamma_e},
                       {"epochs", epochs},
                       {"validation", eval_to_json(result.report.final_eval)},
                       {"test", eval_to_json(result.test)}};
  write_json(dir / "report.json", report);
  save_predictions(result.test.records, dir / "predictions.jsonl", LogFormat::JSONL);
  DiagramStyle style;
  style.title = "Reliability diagram (" + std::string(to_string(result.config.mode)) + ")";
  render_reliability_svg(result.test.table, style, dir / "reliability.svg");

  const json resolved = {{"gamma_e", result.config.loss.gamma_e},
                         {"train_seed", result.config.seed},
                         {"split_seed", mix_seed(options.seed, kSplitStream)},
                         {"ece_weight_schedule", schedule}};
  write_json(dir / "run.json",
             manifest("train", options.seed, options_to_json(options), resolved,
                      {"report.json", "predictions.jsonl", "reliability.svg"}));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Calibration toolkit: ECE metrics, soft-ECE training and reliability reports",
               "calib");
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "Train one model on synthetic data");
  add_train_flags(train_cmd, train_flags, true);

  TrainFlags exp_flags;
  auto* exp_cmd = app.add_subcommand(
      "experiment", "Train vanilla, curriculum and fixed-weight arms, then compare them");
  add_train_flags(exp_cmd, exp_flags, false);

  PredictionFlags eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "ECE and classification metrics of a prediction log");
  add_prediction_flags(eval_cmd, eval_flags);
  eval_cmd->add_option("--diagram", eval_flags.diagram, "Also write a reliability diagram SVG");

  PredictionFlags diagram_flags;
  auto* diagram_cmd = app.add_subcommand("diagram", "Reliability diagram of a prediction log");
  add_prediction_flags(diagram_cmd, diagram_flags);
  diagram_cmd->add_option("--out", diagram_flags.diagram, "Output SVG")->required();

  std::vector<std::string> run_dirs;
  std::string compare_out;
  auto* compare_cmd = app.add_subcommand("compare", "Markdown comparison of finished runs");
  compare_cmd->add_option("run_dirs", run_dirs, "Run directories containing report.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  compare_cmd->add_option("--out", compare_out, "Also write the table to this file");

  std::vector<const char*> argv{"calib"};
  for (const auto& a : args) {
    argv.push_back(a.c_str());
  }
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    out << target->help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return 0;
  } catch (const CLI::ParseError& e) {
    const CLI::App* target = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << target->help();
    return 2;
  }

  try {
    if (*train_cmd) {
      cmd_train(train_cmd, train_flags, out);
    } else if (*exp_cmd) {
      cmd_experiment(exp_cmd, exp_flags, out);
    } else if (*eval_cmd) {
      cmd_eval(eval_cmd, eval_flags, out);
    } else if (*diagram_cmd) {
      cmd_diagram(diagram_cmd, diagram_flags, out);
    } else if (*compare_cmd) {
      cmd_compare(run_dirs, compare_out, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace calib
