// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

// Synthetic corpora and scratch directories shared by the unit and
// acceptance suites.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "needle/corpus.hpp"
#include "needle/util.hpp"

namespace needle::fixtures {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "needle") {
    auto pattern = (std::filesystem::temp_directory_path() / (tag + "-XXXXXX")).string();
    if (!mkdtemp(pattern.data())) throw IoError("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string numbered(const char* prefix, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%06zu", prefix, i);
  return buf;
}

inline Snippet make_snippet(const std::string& id, const std::string& text,
                            std::optional<Theme> theme = std::nullopt) {
  Snippet s;
  s.id = id;
  s.query = "q";
  s.engine = "fixture";
  s.url = "https://example.org/" + id;
  s.title = "";
  s.snippet_text = text;
  s.theme = theme;
  return s;
}

// Per-theme sample counts, in kAllThemes order.
inline constexpr std::array<std::size_t, 8> kThemeCounts = {80107, 10301, 7244, 5175, 5022, 2904, 2509, 1170};
inline constexpr std::size_t kThemeTotal = 114432;

// Positives per theme: 2.23% of each theme count, rounded to nearest
// (sums to 2,552).
inline std::array<std::size_t, 8> theme_positives() {
  std::array<std::size_t, 8> out{};
  for (std::size_t t = 0; t < 8; ++t)
    out[t] = static_cast<std::size_t>(static_cast<double>(kThemeCounts[t]) * 0.0223 + 0.5);
  return out;
}

// 114,432 records with the published theme counts. Themes are interleaved by
// a seeded shuffle so that no part of the file is theme-homogeneous.
inline std::vector<LabeledSnippet> theme_corpus(std::uint64_t seed = 1) {
  auto positives = theme_positives();
  std::vector<std::pair<std::size_t, int>> cells;
  cells.reserve(kThemeTotal);
  for (std::size_t t = 0; t < 8; ++t)
    for (std::size_t i = 0; i < kThemeCounts[t]; ++i) cells.emplace_back(t, i < positives[t] ? 1 : 0);
  util::Rng rng(seed);
  rng.shuffle(cells);
  std::vector<LabeledSnippet> out;
  out.reserve(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto [t, y] = cells[i];
    out.push_back({make_snippet(numbered("s", i), "snippet " + std::to_string(i), kAllThemes[t]),
                   y ? Label::Interesting : Label::NotInteresting});
  }
  return out;
}

// Marker phrases that only ever occur in positive documents of the planted
// corpus.
inline const std::vector<std::string>& signal_phrases() {
  static const std::vector<std::string> w = {"tanie papierosy bez akcyzy", "papierosy z przemytu bez akcyzy",
                                                "bez akcyzy wysyłka dyskretna"};
  return w;
}

// Neutral filler vocabulary: three-syllable pseudo-words (8,000 of them).
inline const std::vector<std::string>& filler_words() {
  static const std::vector<std::string> w = [] {
    const char* syl[] = {"ka", "mo", "ri", "te", "su", "no", "pa", "li", "ve", "do",
                         "ze", "bu", "gi", "ho", "ja", "wy", "ce", "fo", "ru", "si"};
    std::vector<std::string> out;
    for (const char* a : syl)
      for (const char* b : syl)
        for (const char* c : syl) out.push_back(std::string(a) + b + c);
    return out;
  }();
  return w;
}

struct PlantedOptions {
  std::size_t n = 5000;
  double positive_rate = 0.02;
  std::uint64_t seed = 2026;
  std::size_t filler_vocab = 8000;  // leading slice of filler_words()
  double zipf_exponent = 1.0;       // filler rank-frequency law; 0 = uniform
  std::size_t min_len = 8;
  std::size_t max_len = 14;
  std::size_t n_phrases = 3;  // leading slice of signal_phrases()
};

// round(rate * n) positives at seeded positions. Every document holds
// min_len..max_len filler words drawn by rank frequency; positives additionally
// carry one marker phrase at a random position. No theme column.
inline std::vector<LabeledSnippet> planted_corpus(const PlantedOptions& o = {}) {
  const auto& filler = filler_words();
  const auto& signal = signal_phrases();
  const auto n_pos = static_cast<std::size_t>(static_cast<double>(o.n) * o.positive_rate + 0.5);
  std::vector<int> labels(o.n, 0);
  for (std::size_t i = 0; i < n_pos; ++i) labels[i] = 1;
  util::Rng rng(o.seed);
  rng.shuffle(labels);
  // Cumulative rank-frequency weights for inverse-CDF sampling.
  std::vector<double> cdf(o.filler_vocab);
  double acc = 0;
  for (std::size_t r = 0; r < o.filler_vocab; ++r) cdf[r] = acc += std::pow(static_cast<double>(r + 1), -o.zipf_exponent);
  auto draw = [&] {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), rng.uniform() * acc);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), o.filler_vocab - 1);
  };
  std::vector<LabeledSnippet> out;
  out.reserve(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    std::vector<std::string> words;
    const std::size_t len = o.min_len + rng.below(o.max_len - o.min_len + 1);
    for (std::size_t k = 0; k < len; ++k) words.push_back(filler[draw()]);
    if (labels[i])
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.below(words.size() + 1)),
                   signal[rng.below(o.n_phrases)]);
    std::string text;
    for (const auto& w : words) text += (text.empty() ? "" : " ") + w;
    out.push_back({make_snippet(numbered("d", i), text), labels[i] ? Label::Interesting : Label::NotInteresting});
  }
  return out;
}

}  // namespace needle::fixtures
