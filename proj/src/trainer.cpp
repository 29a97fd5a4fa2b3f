#include "calib/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>
#include <string>

#include "calib/shuffle.hpp"

namespace calib {
namespace {

void check_data(const Dataset& data, const char* what) {
  data.validate();
  if (data.size() == 0) {
    throw std::domain_error(std::string(what) + " is empty");
  }
}

struct EpochTotals {
  double nll = 0.0;
  double soft_ece = 0.0;
  std::size_t samples = 0;
};

// One pass of mini-batch SGD over `data` in the order given by `order`.
EpochTotals run_epoch(ModelParams& params, const Dataset& data,
                      std::span<const std::size_t> order, double ece_weight,
                      const TrainConfig& config) {
  EpochTotals totals;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t len = std::min(config.batch_size, order.size() - start);
    const Dataset batch = data.subset(order.subspan(start, len));
    auto [value, grads] =
        backward(params, batch.features, batch.labels, ece_weight, config.loss);
    params = sgd_step(params, grads, config.learning_rate);
    const auto weight = static_cast<double>(len);
    totals.nll += weight * value.nll;
    totals.soft_ece += weight * value.soft_ece;
    totals.samples += len;
  }
  return totals;
}

}  // namespace

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::VanillaNLL:
      return "vanilla";
    case TrainMode::CalibratedCurriculum:
      return "curriculum";
    case TrainMode::CalibratedFixed:
      return "fixed";
  }
  return "vanilla";
}

TrainMode parse_train_mode(std::string_view name) {
  if (name == "vanilla") return TrainMode::VanillaNLL;
  if (name == "curriculum") return TrainMode::CalibratedCurriculum;
  if (name == "fixed") return TrainMode::CalibratedFixed;
  throw std::domain_error("unknown training mode: " + std::string(name));
}

void TrainConfig::validate() const {
  if (epochs == 0) {
    throw std::domain_error("TrainConfig: epochs must be at least 1");
  }
  if (batch_size == 0) {
    throw std::domain_error("TrainConfig: batch_size must be at least 1");
  }
  if (!(learning_rate > 0.0)) {
    throw std::domain_error("TrainConfig: learning_rate must be positive");
  }
  if (eval_bins == 0) {
    throw std::domain_error("TrainConfig: eval_bins must be positive");
  }
  if (loss.total_epochs != epochs) {
    throw std::domain_error("TrainConfig: loss.total_epochs must equal epochs");
  }
  loss.validate();
}

double applied_ece_weight(std::size_t epoch, const TrainConfig& config) {
  switch (config.mode) {
    case TrainMode::VanillaNLL:
      return 0.0;
    case TrainMode::CalibratedCurriculum:
      return curriculum_weight(epoch, config.loss);
    case TrainMode::CalibratedFixed:
      return config.loss.gamma_e;
  }
  return 0.0;
}

std::pair<LossValue, ModelParams> backward(const ModelParams& params, const Matrix& features,
                                           std::span<const std::size_t> labels,
                                           std::size_t epoch, const TrainConfig& config) {
  return backward(params, features, labels, applied_ece_weight(epoch, config), config.loss);
}

std::pair<ModelParams, TrainReport> train(const Dataset& train_set, const Dataset& val_set,
                                          const TrainConfig& config) {
  config.validate();
  check_data(train_set, "training split");
  check_data(val_set, "validation split");
  if (train_set.dim() != val_set.dim() || train_set.num_classes != val_set.num_classes) {
    throw std::domain_error("train: training and validation splits disagree on shape");
  }

  ModelParams params =
      init_model(train_set.dim(), config.hidden_dim, train_set.num_classes, config.seed);
  TrainReport report;
  report.epochs.reserve(config.epochs);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const double weight = applied_ece_weight(epoch, config);
    const auto order = shuffled_indices(train_set.size(), mix_seed(config.seed, epoch));
    const EpochTotals totals = run_epoch(params, train_set, order, weight, config);
    if (!params.all_finite()) {
      throw std::domain_error("train: parameters became non-finite at epoch " +
                              std::to_string(epoch));
    }

    EpochStats stats;
    const auto n = static_cast<double>(totals.samples);
    stats.nll = totals.nll / n;
    stats.soft_ece = totals.soft_ece / n;
    stats.ece_weight = weight;
    stats.total = stats.nll + weight * stats.soft_ece;
    stats.train_accuracy = classification_report(predict(params, train_set),
                                                 train_set.num_classes)
                               .accuracy;
    report.epochs.push_back(stats);
    report.epoch_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count());
  }

  report.final_eval = evaluate(params, val_set, config.eval_bins);
  return {std::move(params), std::move(report)};
}

std::vector<PredictionRecord> predict(const ModelParams& params, const Dataset& data) {
  const Matrix probs = softmax_rows(forward(params, data.features));
  std::vector<PredictionRecord> records;
  records.reserve(data.size());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const auto p = probs.row(i);
    PredictionRecord rec;
    rec.probs.assign(p.begin(), p.end());
    rec.predicted_class = argmax(p);
    rec.confidence = p[rec.predicted_class];
    rec.true_class = data.labels[i];
    records.push_back(std::move(rec));
  }
  return records;
}

EvalResult evaluate(const ModelParams& params, const Dataset& data, std::size_t num_bins) {
  check_data(data, "evaluation data");
  return evaluate(predict(params, data), data.num_classes, num_bins);
}

EvalResult evaluate(std::vector<PredictionRecord> records, std::size_t num_classes,
                    std::size_t num_bins) {
  if (records.empty()) {
    throw std::domain_error("evaluate: no records");
  }
  EvalResult out;
  out.table = build_reliability_table(records, num_bins);
  out.ece = ece(out.table);
  out.report = classification_report(records, num_classes);
  out.records = std::move(records);
  return out;
}

std::pair<double, double> warmup_losses(const Dataset& train_set, const TrainConfig& config) {
  config.validate();
  check_data(train_set, "training split");
  ModelParams params =
      init_model(train_set.dim(), config.hidden_dim, train_set.num_classes, config.seed);
  const auto order = shuffled_indices(train_set.size(), mix_seed(config.seed, 0));
  const EpochTotals totals = run_epoch(params, train_set, order, 0.0, config);
  const auto n = static_cast<double>(totals.samples);
  return {totals.nll / n, totals.soft_ece / n};
}

double resolve_auto_gamma(const Dataset& train_set, const TrainConfig& config) {
  const auto [nll, soft] = warmup_losses(train_set, config);
  return auto_gamma(nll, soft);
}

}  // namespace calib
