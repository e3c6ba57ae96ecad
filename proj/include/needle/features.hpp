// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "needle/util.hpp"

namespace needle {

struct VocabularySettings {
  std::size_t min_df = 2;
  std::size_t max_features = 100'000;  // 0 = unlimited
  std::size_t ngram_min = 1;
  std::size_t ngram_max = 2;

  bool operator==(const VocabularySettings&) const = default;
};

class Vocabulary {
 public:
  Vocabulary() = default;

  // Terms must be sorted and unique; df aligned with terms.
  Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> df, std::size_t n_docs,
             VocabularySettings settings)
      : terms_(std::move(terms)), df_(std::move(df)), n_docs_(n_docs), settings_(settings) {
    index_.reserve(terms_.size());
    idf_.reserve(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      index_.emplace(terms_[i], static_cast<std::uint32_t>(i));
      idf_.push_back(std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(df_[i]))) + 1.0);
    }
  }

  std::size_t size() const { return terms_.size(); }
  std::size_t n_docs() const { return n_docs_; }
  const VocabularySettings& settings() const { return settings_; }
  const std::vector<std::string>& terms() const { return terms_; }
  std::size_t df(std::size_t i) const { return df_[i]; }
  double idf(std::size_t i) const { return idf_[i]; }

  std::optional<std::uint32_t> find(std::string_view term) const {
    auto it = index_.find(std::string(term));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  // Header line, then "term<TAB>index<TAB>df" per term.
  std::string serialize() const {
    std::string out = "#needle-vocab v1\tmin_df=" + std::to_string(settings_.min_df) +
                      "\tmax_features=" + std::to_string(settings_.max_features) +
                      "\tngram=" + std::to_string(settings_.ngram_min) + "," + std::to_string(settings_.ngram_max) +
                      "\tdocs=" + std::to_string(n_docs_) + "\n";
    for (std::size_t i = 0; i < terms_.size(); ++i)
      out += terms_[i] + '\t' + std::to_string(i) + '\t' + std::to_string(df_[i]) + '\n';
    return out;
  }

  std::string hash() const { return util::hex64(util::fnv1a64(serialize())); }

  static Vocabulary parse(std::string_view text) {
    auto lines = util::split(text, '\n');
    if (!lines.empty() && lines.back().empty()) lines.pop_back();
    if (lines.empty()) throw FormatError("vocabulary: missing header", 1);
    auto head = util::split(lines[0], '\t');
    if (head.size() != 5 || head[0] != "#needle-vocab v1") throw FormatError("vocabulary: bad header", 1);
    VocabularySettings s;
    std::size_t docs = 0;
    auto value = [&](std::string_view field, std::string_view key) {
      if (field.substr(0, key.size()) != key) throw FormatError("vocabulary: expected " + std::string(key), 1);
      return field.substr(key.size());
    };
    s.min_df = static_cast<std::size_t>(util::parse_int(value(head[1], "min_df=")));
    s.max_features = static_cast<std::size_t>(util::parse_int(value(head[2], "max_features=")));
    auto ng = util::split(value(head[3], "ngram="), ',');
    if (ng.size() != 2) throw FormatError("vocabulary: bad ngram range", 1);
    s.ngram_min = static_cast<std::size_t>(util::parse_int(ng[0]));
    s.ngram_max = static_cast<std::size_t>(util::parse_int(ng[1]));
    docs = static_cast<std::size_t>(util::parse_int(value(head[4], "docs=")));
    std::vector<std::string> terms;
    std::vector<std::size_t> df;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      auto f = util::split(lines[i], '\t');
      if (f.size() != 3) throw FormatError("vocabulary: expected term<TAB>index<TAB>df", i + 1);
      if (static_cast<std::size_t>(util::parse_int(f[1])) != i - 1)
        throw FormatError("vocabulary: indices must be contiguous", i + 1);
      if (!terms.empty() && !(terms.back() < f[0])) throw FormatError("vocabulary: terms not sorted", i + 1);
      terms.emplace_back(f[0]);
      df.push_back(static_cast<std::size_t>(util::parse_int(f[2])));
    }
    return Vocabulary(std::move(terms), std::move(df), docs, s);
  }

  static Vocabulary load(const std::filesystem::path& path) { return parse(util::read_file(path)); }
  void save(const std::filesystem::path& path) const { util::write_file(path, serialize()); }

 private:
  std::vector<std::string> terms_;
  std::vector<std::size_t> df_;
  std::vector<double> idf_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::size_t n_docs_ = 0;
  VocabularySettings settings_;
};

struct FeatureEntry {
  std::uint32_t index;
  double weight;

  bool operator==(const FeatureEntry&) const = default;
};

// Sparse vector, entries sorted by strictly increasing index.
struct FeatureVector {
  std::vector<FeatureEntry> entries;

  bool empty() const { return entries.empty(); }

  double dot(std::span<const double> w) const {
    double s = 0;
    for (const auto& e : entries) s += w[e.index] * e.weight;
    return s;
  }

  double norm() const {
    double s = 0;
    for (const auto& e : entries) s += e.weight * e.weight;
    return std::sqrt(s);
  }

  bool operator==(const FeatureVector&) const = default;
};

namespace features {

namespace detail {

inline bool is_word_codepoint(std::int32_t cp) {
  if (cp < 0x80)
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') || (cp >= '0' && cp <= '9');
  if (cp < 0xC0) return cp == 0xAA || cp == 0xB5 || cp == 0xBA;
  if (cp == 0xD7 || cp == 0xF7) return false;
  if (cp == 0x37E || cp == 0x387) return false;                  // Greek question mark, ano teleia
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;                // punctuation, symbols, arrows, math
  if (cp >= 0x2E00 && cp <= 0x2E7F) return false;                // supplemental punctuation
  if (cp >= 0x3000 && cp <= 0x303F) return false;                // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if ((cp >= 0xFF00 && cp <= 0xFF0F) || (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xFF3B && cp <= 0xFF40) ||
      (cp >= 0xFF5B && cp <= 0xFF65))
    return false;
  if (cp >= 0xFFF0 && cp <= 0xFFFF) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;              // emoji and pictographs
  return true;
}

// Lowercase folding for ASCII, Latin-1, Latin Extended-A, Greek and Cyrillic.
inline std::int32_t fold_case(std::int32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 0x20;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 0x20;
  if (cp == 0x130) return 'i';
  if (cp >= 0x100 && cp <= 0x137) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp >= 0x139 && cp <= 0x148) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x14A && cp <= 0x177) return (cp % 2 == 0) ? cp + 1 : cp;
  if (cp == 0x178) return 0xFF;
  if (cp >= 0x179 && cp <= 0x17E) return (cp % 2 == 1) ? cp + 1 : cp;
  if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  if ((cp >= 0x460 && cp <= 0x481) || (cp >= 0x48A && cp <= 0x4BF)) return (cp % 2 == 0) ? cp + 1 : cp;
  return cp;
}

}  // namespace detail

// Splits on anything that is not a letter, digit or combining mark, and
// lowercases. Invalid UTF-8 bytes act as separators.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  std::size_t i = 0;
  while (i < text.size()) {
    std::int32_t cp = util::decode_utf8(text, i);
    if (cp >= 0 && detail::is_word_codepoint(cp)) {
      util::append_utf8(cur, detail::fold_case(cp));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

// Word n-grams for n in [lo, hi], tokens joined by a single space.
inline std::vector<std::string> ngrams(const std::vector<std::string>& tokens, std::size_t lo, std::size_t hi) {
  std::vector<std::string> out;
  for (std::size_t n = std::max<std::size_t>(lo, 1); n <= hi; ++n) {
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
      std::string g = tokens[i];
      for (std::size_t k = 1; k < n; ++k) {
        g += ' ';
        g += tokens[i + k];
      }
      out.push_back(std::move(g));
    }
  }
  return out;
}

inline std::vector<std::string> terms_of(std::string_view text, const VocabularySettings& s) {
  return ngrams(tokenize(text), s.ngram_min, s.ngram_max);
}

// Keeps terms with df >= min_df; beyond max_features, the highest-df terms
// win with ties broken lexicographically. Indices follow lexicographic
// (byte) order of the retained terms.
inline Vocabulary fit_vocabulary(std::span<const std::string> corpus, const VocabularySettings& settings) {
  if (corpus.empty()) throw Error("fit_vocabulary: empty corpus");
  if (settings.ngram_min < 1 || settings.ngram_max < settings.ngram_min)
    throw Error("fit_vocabulary: invalid n-gram range");
  std::unordered_map<std::string, std::size_t> df;
  for (const auto& doc : corpus) {
    auto terms = terms_of(doc, settings);
    std::sort(terms.begin(), terms.end());
    terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
    for (auto& t : terms) ++df[std::move(t)];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [term, count] : df)
    if (count >= settings.min_df) kept.emplace_back(term, count);
  if (settings.max_features != 0 && kept.size() > settings.max_features) {
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    kept.resize(settings.max_features);
  }
  std::sort(kept.begin(), kept.end());
  std::vector<std::string> terms;
  std::vector<std::size_t> counts;
  terms.reserve(kept.size());
  counts.reserve(kept.size());
  for (auto& [t, c] : kept) {
    terms.push_back(std::move(t));
    counts.push_back(c);
  }
  return Vocabulary(std::move(terms), std::move(counts), corpus.size(), settings);
}

// Raw term count times smoothed idf, L2-normalized. Out-of-vocabulary terms
// are ignored; an all-OOV text yields the empty vector.
inline FeatureVector vectorize(std::string_view text, const Vocabulary& vocab) {
  std::map<std::uint32_t, double> tf;
  for (const auto& t : terms_of(text, vocab.settings()))
    if (auto idx = vocab.find(t)) tf[*idx] += 1.0;
  FeatureVector v;
  v.entries.reserve(tf.size());
  double sq = 0;
  for (auto [idx, count] : tf) {
    double w = count * vocab.idf(idx);
    v.entries.push_back({idx, w});
    sq += w * w;
  }
  if (sq > 0) {
    double n = std::sqrt(sq);
    for (auto& e : v.entries) e.weight /= n;
  }
  return v;
}

}  // namespace features
}  // namespace needle
