// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "needle/features.hpp"
#include "needle/trainer.hpp"
#include "needle/util.hpp"

namespace needle {

// TOML subset: [section] / [section.sub] headers, key = value lines with
// quoted strings, numbers or booleans, and # comments. Keys are stored
// fully qualified ("training.batch_size").
class Config {
 public:
  static Config parse(std::string_view text) {
    Config cfg;
    std::string section;
    auto lines = util::split(text, '\n');
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto line = util::trim(strip_comment(lines[i]));
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw FormatError("config: unterminated section header", i + 1);
        section = std::string(util::trim(line.substr(1, line.size() - 2)));
        if (section.empty()) throw FormatError("config: empty section name", i + 1);
        continue;
      }
      auto eq = line.find('=');
      if (eq == std::string_view::npos) throw FormatError("config: expected key = value", i + 1);
      auto key = std::string(util::trim(line.substr(0, eq)));
      auto raw = util::trim(line.substr(eq + 1));
      if (key.empty() || raw.empty()) throw FormatError("config: expected key = value", i + 1);
      std::string value;
      if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"') throw FormatError("config: unterminated string", i + 1);
        value = std::string(raw.substr(1, raw.size() - 2));
      } else {
        value = std::string(raw);
      }
      auto full = section.empty() ? key : section + "." + key;
      if (!cfg.values_.emplace(full, value).second) throw FormatError("config: duplicate key " + full, i + 1);
    }
    return cfg;
  }

  static Config load(const std::filesystem::path& path) { return parse(util::read_file(path)); }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::string get_string(const std::string& key, const std::string& fallback = "") const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return util::parse_double(it->second);
    } catch (const FormatError&) {
      throw FormatError("config: " + key + " must be a number");
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
      return util::parse_int(it->second);
    } catch (const FormatError&) {
      throw FormatError("config: " + key + " must be an integer");
    }
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) const {
    auto v = get_int(key, static_cast<long long>(fallback));
    if (v < 0) throw FormatError("config: " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  bool get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    if (it->second == "true") return true;
    if (it->second == "false") return false;
    throw FormatError("config: " + key + " must be true or false");
  }

  // Distinct names of the sub-sections under `prefix` ("engine" ->
  // {"google", "bing"} for [engine.google], [engine.bing]).
  std::vector<std::string> subsections(const std::string& prefix) const {
    std::set<std::string> names;
    for (const auto& [k, v] : values_) {
      if (k.rfind(prefix + ".", 0) != 0) continue;
      auto rest = k.substr(prefix.size() + 1);
      auto dot = rest.find('.');
      if (dot != std::string::npos) names.insert(rest.substr(0, dot));
    }
    return {names.begin(), names.end()};
  }

  // Throws on any key outside `allowed` (entries ending in ".*" match a
  // whole sub-section).
  void require_known(const std::set<std::string>& allowed) const {
    for (const auto& [k, v] : values_) {
      if (allowed.count(k)) continue;
      bool ok = false;
      for (const auto& a : allowed)
        if (a.size() > 2 && a.compare(a.size() - 2, 2, ".*") == 0 && k.rfind(a.substr(0, a.size() - 1), 0) == 0)
          ok = true;
      if (!ok) throw FormatError("config: unknown key " + k);
    }
  }

 private:
  static std::string_view strip_comment(std::string_view line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
  }

  std::map<std::string, std::string> values_;
};

// Training, optimizer and feature settings as one bundle. Defaults are the
// linear-model preset; every value can be overridden from a config file.
struct TrainSettings {
  TrainingConfig training = linear_training_preset();
  OptimizerConfig optimizer = linear_preset();
  VocabularySettings features;
};

inline const std::set<std::string>& train_setting_keys() {
  static const std::set<std::string> keys = {
      "training.max_epochs",    "training.batch_size",      "training.validate_every", "training.patience",
      "training.positive_weight", "training.negative_weight", "training.seed",         "optimizer.beta1",
      "optimizer.beta2",        "optimizer.epsilon",        "optimizer.peak_lr",       "optimizer.warmup_steps",
      "features.min_df",        "features.max_features",    "features.ngram_min",      "features.ngram_max",
  };
  return keys;
}

inline TrainSettings train_settings_from(const Config& c, TrainSettings s = {}) {
  auto& t = s.training;
  t.max_epochs = c.get_size("training.max_epochs", t.max_epochs);
  t.batch_size = c.get_size("training.batch_size", t.batch_size);
  t.validate_every = c.get_size("training.validate_every", t.validate_every);
  t.patience = c.get_size("training.patience", t.patience);
  t.class_weights.positive = c.get_double("training.positive_weight", t.class_weights.positive);
  t.class_weights.negative = c.get_double("training.negative_weight", t.class_weights.negative);
  t.seed = static_cast<std::uint64_t>(c.get_size("training.seed", t.seed));
  auto& o = s.optimizer;
  o.beta1 = c.get_double("optimizer.beta1", o.beta1);
  o.beta2 = c.get_double("optimizer.beta2", o.beta2);
  o.epsilon = c.get_double("optimizer.epsilon", o.epsilon);
  o.peak_lr = c.get_double("optimizer.peak_lr", o.peak_lr);
  o.warmup_steps = c.get_size("optimizer.warmup_steps", o.warmup_steps);
  auto& f = s.features;
  f.min_df = c.get_size("features.min_df", f.min_df);
  f.max_features = c.get_size("features.max_features", f.max_features);
  f.ngram_min = c.get_size("features.ngram_min", f.ngram_min);
  f.ngram_max = c.get_size("features.ngram_max", f.ngram_max);
  t.validate();
  return s;
}

}  // namespace needle
