// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "needle/corpus.hpp"
#include "needle/features.hpp"
#include "needle/metrics.hpp"
#include "needle/util.hpp"

namespace needle {

// Linear model over feature indices [0, V) plus a bias.
struct ModelParams {
  std::vector<double> weights;
  double bias = 0;

  explicit ModelParams(std::size_t dim = 0) : weights(dim, 0.0) {}

  std::size_t dim() const { return weights.size(); }

  bool finite() const {
    return std::isfinite(bias) && std::all_of(weights.begin(), weights.end(), [](double w) { return std::isfinite(w); });
  }

  bool operator==(const ModelParams&) const = default;
};

struct OptimizerConfig {
  double beta1 = 0.99;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double peak_lr = 2e-5;
  std::size_t warmup_steps = 500;
  std::size_t total_steps = 0;  // filled in by fit() from data size and epochs

  void validate() const {
    if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw Error("optimizer: betas must be in [0,1)");
    if (!(epsilon > 0)) throw Error("optimizer: epsilon must be positive");
    if (!(peak_lr >= 0) || !std::isfinite(peak_lr)) throw Error("optimizer: peak learning rate must be >= 0");
    if (warmup_steps > total_steps) throw Error("optimizer: warmup exceeds total steps");
  }
};

struct ClassWeights {
  double positive = 1.0;
  double negative = 0.5;

  double of(int y) const { return y == 1 ? positive : negative; }
};

struct TrainingConfig {
  std::size_t max_epochs = 5;
  std::size_t batch_size = 64;
  std::size_t validate_every = 200;
  std::size_t patience = 10;
  ClassWeights class_weights;
  std::uint64_t seed = 0;

  void validate() const {
    if (max_epochs == 0 || batch_size == 0 || validate_every == 0 || patience == 0)
      throw Error("training: epochs, batch size, validation interval and patience must be positive");
    if (!(class_weights.positive > 0) || !(class_weights.negative > 0))
      throw Error("training: class weights must be positive");
  }
};

// Preset for a linear model trained from zero initialization: peak
// learning rate 1e-2 and a 50-epoch cap. Early stopping usually ends the
// run well before the cap; everything else is the default recipe.
inline OptimizerConfig linear_preset() {
  OptimizerConfig c;
  c.peak_lr = 1e-2;
  return c;
}

inline TrainingConfig linear_training_preset() {
  TrainingConfig t;
  t.max_epochs = 50;
  return t;
}

// Adam moments; slot dim() holds the bias.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;

  explicit AdamState(std::size_t dim = 0) : m(dim + 1, 0.0), v(dim + 1, 0.0) {}
};

struct Example {
  FeatureVector x;
  int y = 0;  // 1 = Interesting
};

// Dense gradient; the last slot is the bias.
struct Gradient {
  std::vector<double> values;

  explicit Gradient(std::size_t dim = 0) : values(dim + 1, 0.0) {}
  double bias() const { return values.back(); }
};

struct ValidationRecord {
  std::size_t step = 0;
  double f1 = 0;
  double loss = 0;
  double lr = 0;

  bool operator==(const ValidationRecord&) const = default;
};

enum class StopReason { EarlyStopped, MaxEpochs };

struct TrainingLog {
  std::vector<ValidationRecord> validations;
  std::size_t best_step = 0;
  double best_f1 = 0;
  StopReason stop_reason = StopReason::MaxEpochs;
  std::size_t total_steps = 0;
  std::size_t effective_warmup = 0;
  bool degenerate_validation = false;  // validation set had no positives

  bool operator==(const TrainingLog&) const = default;
};

struct FitResult {
  ModelParams params;
  TrainingLog log;
};

namespace trainer {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

inline double predict_proba(const ModelParams& params, const FeatureVector& x) {
  return sigmoid(x.dot(params.weights) + params.bias);
}

inline double weighted_loss(std::span<const Example> batch, const ModelParams& params, const ClassWeights& cw) {
  if (batch.empty()) throw Error("weighted_loss: empty batch");
  constexpr double kClamp = 1e-12;
  double sum = 0;
  for (const auto& ex : batch) {
    double p = std::clamp(predict_proba(params, ex.x), kClamp, 1.0 - kClamp);
    sum += -cw.of(ex.y) * (ex.y == 1 ? std::log(p) : std::log(1.0 - p));
  }
  return sum / static_cast<double>(batch.size());
}

// Accumulates into `out` (which must be zeroed) and returns it.
inline Gradient& gradient_into(Gradient& out, std::span<const Example> batch, const ModelParams& params,
                               const ClassWeights& cw) {
  if (batch.empty()) throw Error("gradient: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    double r = cw.of(ex.y) * (predict_proba(params, ex.x) - ex.y) * inv_n;
    for (const auto& e : ex.x.entries) out.values[e.index] += r * e.weight;
    out.values.back() += r;
  }
  return out;
}

inline Gradient gradient(std::span<const Example> batch, const ModelParams& params, const ClassWeights& cw) {
  Gradient g(params.dim());
  gradient_into(g, batch, params, cw);
  return g;
}

// Linear warmup from 0 to the peak over [0, warmup], then linear decay to 0
// at total_steps.
inline double lr_at(std::size_t step, const OptimizerConfig& cfg) {
  if (step > cfg.total_steps)
    throw Error("lr_at: step " + std::to_string(step) + " beyond total " + std::to_string(cfg.total_steps));
  if (step < cfg.warmup_steps)
    return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  if (cfg.total_steps == cfg.warmup_steps) return cfg.peak_lr;
  return cfg.peak_lr * static_cast<double>(cfg.total_steps - step) /
         static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

inline void adam_step(AdamState& state, const Gradient& grads, double lr, const OptimizerConfig& cfg,
                      ModelParams& params) {
  const std::size_t n = params.dim() + 1;
  if (grads.values.size() != n || state.m.size() != n || state.v.size() != n)
    throw Error("adam_step: shape mismatch");
  for (double g : grads.values)
    if (!std::isfinite(g)) throw Error("adam_step: non-finite gradient");
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads.values[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    const double delta = lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    if (i + 1 < n)
      params.weights[i] -= delta;
    else
      params.bias -= delta;
  }
}

inline std::vector<Label> predict_labels(const ModelParams& params, std::span<const Example> data,
                                         double threshold = 0.5) {
  std::vector<Label> out;
  out.reserve(data.size());
  for (const auto& ex : data)
    out.push_back(predict_proba(params, ex.x) >= threshold ? Label::Interesting : Label::NotInteresting);
  return out;
}

inline double f1_on(const ModelParams& params, std::span<const Example> data, double threshold = 0.5) {
  std::vector<Label> gold;
  gold.reserve(data.size());
  for (const auto& ex : data) gold.push_back(ex.y == 1 ? Label::Interesting : Label::NotInteresting);
  return metrics::compute(metrics::confusion(predict_labels(params, data, threshold), gold)).f1;
}

// Returns the validation F1 for the current parameters. fit() uses
// f1_on(validation) unless a scorer is supplied.
using ValidationScorer = std::function<double(const ModelParams&)>;

// Mini-batch Adam with the warmup/decay schedule, validation every
// validate_every optimizer steps and early stopping after `patience`
// consecutive validations without a strict F1 improvement. A final
// validation runs after the last step if it did not land on the interval.
// Returns the parameters of the best validation.
inline FitResult fit(std::span<const Example> train, std::span<const Example> validation, const TrainingConfig& tcfg,
                     OptimizerConfig ocfg, std::size_t dim, const ValidationScorer& scorer) {
  if (train.empty() || validation.empty()) throw Error("fit: empty training or validation set");
  tcfg.validate();
  const std::size_t n = train.size();
  const std::size_t steps_per_epoch = (n + tcfg.batch_size - 1) / tcfg.batch_size;
  ocfg.total_steps = steps_per_epoch * tcfg.max_epochs;
  ocfg.warmup_steps = std::min(ocfg.warmup_steps, ocfg.total_steps);
  ocfg.validate();

  FitResult result;
  TrainingLog& log = result.log;
  log.total_steps = ocfg.total_steps;
  log.effective_warmup = ocfg.warmup_steps;
  log.degenerate_validation =
      std::none_of(validation.begin(), validation.end(), [](const Example& e) { return e.y == 1; });

  ModelParams params(dim);
  AdamState state(dim);
  Gradient grad(dim);
  util::Rng rng(tcfg.seed);
  std::vector<std::size_t> order(n);
  std::vector<Example> batch;
  batch.reserve(tcfg.batch_size);

  double best_f1 = -std::numeric_limits<double>::infinity();
  std::size_t stale = 0;
  std::size_t step = 0;
  std::size_t last_validated = std::numeric_limits<std::size_t>::max();
  bool stop = false;

  auto run_validation = [&] {
    ValidationRecord rec;
    rec.step = step;
    rec.f1 = scorer ? scorer(params) : f1_on(params, validation);
    rec.loss = weighted_loss(validation, params, tcfg.class_weights);
    rec.lr = lr_at(step, ocfg);
    log.validations.push_back(rec);
    last_validated = step;
    if (rec.f1 > best_f1) {
      best_f1 = rec.f1;
      result.params = params;
      log.best_step = step;
      log.best_f1 = rec.f1;
      stale = 0;
    } else if (++stale >= tcfg.patience) {
      log.stop_reason = StopReason::EarlyStopped;
      stop = true;
    }
  };

  for (std::size_t epoch = 0; epoch < tcfg.max_epochs && !stop; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t start = 0; start < n && !stop; start += tcfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(n, start + tcfg.batch_size); ++k) batch.push_back(train[order[k]]);
      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      gradient_into(grad, batch, params, tcfg.class_weights);
      adam_step(state, grad, lr_at(step, ocfg), ocfg, params);
      ++step;
      if (step % tcfg.validate_every == 0) run_validation();
    }
  }
  if (!stop) {
    if (last_validated != step) run_validation();
    if (!stop) log.stop_reason = StopReason::MaxEpochs;
  }
  return result;
}

// Infers the dimension from the largest feature index present.
inline FitResult fit(std::span<const Example> train, std::span<const Example> validation, const TrainingConfig& tcfg,
                     OptimizerConfig ocfg, const ValidationScorer& scorer = {}) {
  if (train.empty() || validation.empty()) throw Error("fit: empty training or validation set");
  tcfg.validate();
  std::size_t dim = 0;
  for (auto set : {train, validation})
    for (const auto& ex : set)
      if (!ex.x.entries.empty()) dim = std::max<std::size_t>(dim, ex.x.entries.back().index + 1);
  return fit(train, validation, tcfg, ocfg, dim, scorer);
}

// --- model files ------------------------------------------------------------

struct Model {
  ModelParams params;
  std::string vocab_hash;

  // "#needle-model v1<TAB>dim=V", "vocab<TAB>hash", "bias<TAB>b", then one
  // "index<TAB>weight" line per nonzero weight.
  std::string serialize() const {
    std::string out = "#needle-model v1\tdim=" + std::to_string(params.dim()) + "\n";
    out += "vocab\t" + vocab_hash + "\n";
    out += "bias\t" + util::format_double(params.bias) + "\n";
    for (std::size_t i = 0; i < params.dim(); ++i)
      if (params.weights[i] != 0.0) out += std::to_string(i) + '\t' + util::format_double(params.weights[i]) + '\n';
    return out;
  }

  // Content hash of the serialized model.
  std::string version() const { return util::hex64(util::fnv1a64(serialize())); }

  static Model parse(std::string_view text) {
    auto lines = util::split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.size() < 3) throw FormatError("model: truncated file");
    auto head = util::split(lines[0], '\t');
    if (head.size() != 2 || head[0] != "#needle-model v1" || head[1].substr(0, 4) != "dim=")
      throw FormatError("model: bad header", 1);
    Model m;
    m.params = ModelParams(static_cast<std::size_t>(util::parse_int(head[1].substr(4))));
    auto vocab = util::split(lines[1], '\t');
    if (vocab.size() != 2 || vocab[0] != "vocab") throw FormatError("model: expected vocab line", 2);
    m.vocab_hash = vocab[1];
    auto bias = util::split(lines[2], '\t');
    if (bias.size() != 2 || bias[0] != "bias") throw FormatError("model: expected bias line", 3);
    m.params.bias = util::parse_double(bias[1]);
    for (std::size_t i = 3; i < lines.size(); ++i) {
      auto f = util::split(lines[i], '\t');
      if (f.size() != 2) throw FormatError("model: expected index<TAB>weight", i + 1);
      auto idx = util::parse_int(f[0]);
      if (idx < 0 || static_cast<std::size_t>(idx) >= m.params.dim())
        throw FormatError("model: weight index out of range", i + 1);
      m.params.weights[static_cast<std::size_t>(idx)] = util::parse_double(f[1]);
    }
    if (!m.params.finite()) throw FormatError("model: non-finite parameter");
    return m;
  }

  static Model load(const std::filesystem::path& path) { return parse(util::read_file(path)); }
};

// Text the classifier sees for a snippet.
inline std::string document_text(const Snippet& s) {
  if (s.title.empty()) return s.snippet_text;
  return s.title + "\n" + s.snippet_text;
}

inline std::vector<Example> make_examples(std::span<const LabeledSnippet> records, const Vocabulary& vocab) {
  std::vector<Example> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back({features::vectorize(document_text(r.snippet), vocab), r.label == Label::Interesting ? 1 : 0});
  return out;
}

// Vocabulary plus weights, ready to score raw snippets.
struct Classifier {
  Vocabulary vocab;
  Model model;
  std::string version;

  Classifier(Vocabulary v, Model m) : vocab(std::move(v)), model(std::move(m)), version(model.version()) {
    if (model.vocab_hash != vocab.hash()) throw Error("model was trained against a different vocabulary");
    if (model.params.dim() != vocab.size()) throw Error("model dimension does not match vocabulary size");
  }

  double proba(const Snippet& s) const {
    return predict_proba(model.params, features::vectorize(document_text(s), vocab));
  }
};

struct TrainedClassifier {
  Vocabulary vocab;
  Model model;
  TrainingLog log;
};

// Fits the vocabulary on the training texts, then the weights.
inline TrainedClassifier train_classifier(std::span<const LabeledSnippet> train_set,
                                          std::span<const LabeledSnippet> validation_set,
                                          const VocabularySettings& vs, const TrainingConfig& tcfg,
                                          const OptimizerConfig& ocfg) {
  std::vector<std::string> texts;
  texts.reserve(train_set.size());
  for (const auto& r : train_set) texts.push_back(document_text(r.snippet));
  Vocabulary vocab = features::fit_vocabulary(texts, vs);
  auto train = make_examples(train_set, vocab);
  auto valid = make_examples(validation_set, vocab);
  auto fitted = fit(train, valid, tcfg, ocfg, vocab.size(), {});
  Model model{std::move(fitted.params), vocab.hash()};
  return {std::move(vocab), std::move(model), std::move(fitted.log)};
}

}  // namespace trainer
}  // namespace needle
