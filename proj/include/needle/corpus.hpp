// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "needle/util.hpp"

namespace needle {

enum class Theme {
  Drugs,
  SaleOfOrgans,
  Cigarettes,
  Documents,
  WeaponsExplosives,
  Alcohol,
  SexCrime,
  HumanTrafficking,
};

inline constexpr std::array<Theme, 8> kAllThemes = {
    Theme::Drugs,    Theme::SaleOfOrgans,      Theme::Cigarettes, Theme::Documents,
    Theme::WeaponsExplosives, Theme::Alcohol, Theme::SexCrime,   Theme::HumanTrafficking,
};

inline std::string_view to_string(Theme t) {
  switch (t) {
    case Theme::Drugs: return "Drugs";
    case Theme::SaleOfOrgans: return "SaleOfOrgans";
    case Theme::Cigarettes: return "Cigarettes";
    case Theme::Documents: return "Documents";
    case Theme::WeaponsExplosives: return "WeaponsExplosives";
    case Theme::Alcohol: return "Alcohol";
    case Theme::SexCrime: return "SexCrime";
    case Theme::HumanTrafficking: return "HumanTrafficking";
  }
  return "?";
}

inline std::optional<Theme> parse_theme(std::string_view s) {
  for (Theme t : kAllThemes)
    if (to_string(t) == s) return t;
  return std::nullopt;
}

enum class Label { NotInteresting = 0, Interesting = 1 };

enum class Provenance { Adjudicated, OperatorFeedback };

inline char label_token(Label l) { return l == Label::Interesting ? '1' : '0'; }

inline std::optional<Label> parse_label_token(std::string_view s) {
  if (s == "1") return Label::Interesting;
  if (s == "0") return Label::NotInteresting;
  return std::nullopt;
}

struct Snippet {
  std::string id;
  std::string query;
  std::string engine;
  std::string url;
  std::string title;
  std::string snippet_text;
  std::optional<std::string> page_text;
  std::optional<Theme> theme;
  Timestamp collected_at{};

  bool operator==(const Snippet&) const = default;
};

struct LabeledSnippet {
  Snippet snippet;
  Label label = Label::NotInteresting;
  Provenance provenance = Provenance::Adjudicated;

  bool operator==(const LabeledSnippet&) const = default;
};

struct DatasetSplit {
  std::vector<LabeledSnippet> train;
  std::vector<LabeledSnippet> validation;
  std::vector<LabeledSnippet> test;
  std::uint64_t seed = 0;
};

struct DistributionRow {
  std::string name;
  std::size_t count = 0;
  // Percentage in hundredths, rounded half-up: 7000 means 70.00%.
  std::int64_t percent_x100 = 0;

  std::string percent() const {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(percent_x100 / 100),
                  static_cast<long long>(percent_x100 % 100));
    return buf;
  }
};

struct DistributionReport {
  std::vector<DistributionRow> themes;
  std::vector<DistributionRow> labels;
  std::size_t total = 0;
};

enum class Layout {
  PairedInExpected,   // directory with in.tsv + expected.tsv
  SingleFileLabeled,  // one file, label token as the first column
};

namespace corpus {

inline constexpr std::string_view kUnthemed = "Unthemed";

// scheme "://" host [rest], no whitespace or control characters.
inline bool valid_url(std::string_view url) {
  auto sep = url.find("://");
  if (sep == std::string_view::npos || sep == 0) return false;
  auto scheme = url.substr(0, sep);
  auto is_alpha = [](char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); };
  if (!is_alpha(scheme[0])) return false;
  for (char c : scheme)
    if (!is_alpha(c) && !(c >= '0' && c <= '9') && c != '+' && c != '-' && c != '.') return false;
  auto rest = url.substr(sep + 3);
  auto host_end = rest.find_first_of("/?#");
  auto host = rest.substr(0, host_end);
  if (host.empty()) return false;
  for (char c : url)
    if (static_cast<unsigned char>(c) <= 0x20 || c == 0x7f) return false;
  return true;
}

// Throws FormatError if the snippet violates a record invariant or cannot be
// stored in a TSV field.
inline void validate(const Snippet& s, std::size_t line = 0) {
  if (s.id.empty()) throw FormatError("empty snippet id", line);
  if (s.snippet_text.empty()) throw FormatError("empty snippet_text for id " + s.id, line);
  if (!valid_url(s.url)) throw FormatError("invalid url '" + s.url + "' for id " + s.id, line);
  for (const std::string* f : {&s.id, &s.query, &s.engine, &s.url, &s.title, &s.snippet_text}) {
    if (f->find_first_of("\t\n\r") != std::string::npos)
      throw FormatError("field contains tab or newline for id " + s.id, line);
    if (!util::valid_utf8(*f)) throw FormatError("invalid UTF-8 for id " + s.id, line);
  }
}

inline std::string to_in_line(const Snippet& s) {
  // An absent theme drops the last column so no line ends in a tab.
  std::string line = s.id;
  for (const std::string* f : {&s.query, &s.engine, &s.url, &s.title, &s.snippet_text}) {
    line += '\t';
    line += *f;
  }
  if (s.theme) {
    line += '\t';
    line += to_string(*s.theme);
  }
  return line;
}

inline Snippet parse_in_fields(const std::vector<std::string_view>& f, std::size_t line) {
  if (f.size() != 6 && f.size() != 7)
    throw FormatError("expected 6 or 7 tab-separated fields, got " + std::to_string(f.size()), line);
  Snippet s;
  s.id = f[0];
  s.query = f[1];
  s.engine = f[2];
  s.url = f[3];
  s.title = f[4];
  s.snippet_text = f[5];
  if (f.size() == 7 && !f[6].empty()) {
    s.theme = parse_theme(f[6]);
    if (!s.theme) throw FormatError("unknown theme '" + std::string(f[6]) + "'", line);
  }
  validate(s, line);
  return s;
}

inline void check_unique_ids(const std::vector<Snippet>& snippets) {
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < snippets.size(); ++i)
    if (!seen.insert(snippets[i].id).second)
      throw FormatError("duplicate snippet id " + snippets[i].id, i + 1);
}

// --- in.tsv ---------------------------------------------------------------

inline std::vector<Snippet> read_snippets(const std::filesystem::path& in_tsv) {
  auto lines = util::read_lines(in_tsv);
  std::vector<Snippet> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i)
    out.push_back(parse_in_fields(util::split(lines[i], '\t'), i + 1));
  check_unique_ids(out);
  return out;
}

inline void write_snippets(const std::vector<Snippet>& snippets, const std::filesystem::path& in_tsv) {
  std::string data;
  for (std::size_t i = 0; i < snippets.size(); ++i) {
    validate(snippets[i], i + 1);
    data += to_in_line(snippets[i]);
    data += '\n';
  }
  util::write_file(in_tsv, data);
}

// --- expected.tsv / out.tsv -----------------------------------------------

inline std::vector<Label> read_labels(const std::filesystem::path& path) {
  auto lines = util::read_lines(path);
  std::vector<Label> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto l = parse_label_token(lines[i]);
    if (!l) throw FormatError(path.string() + ": malformed label token '" + lines[i] + "'", i + 1);
    out.push_back(*l);
  }
  return out;
}

inline void write_labels(const std::vector<Label>& labels, const std::filesystem::path& path) {
  std::string data;
  data.reserve(labels.size() * 2);
  for (Label l : labels) {
    data += label_token(l);
    data += '\n';
  }
  util::write_file(path, data);
}

// --- labeled datasets -----------------------------------------------------

inline std::vector<LabeledSnippet> read_dataset(const std::filesystem::path& path, Layout layout) {
  std::vector<LabeledSnippet> out;
  if (layout == Layout::PairedInExpected) {
    auto in_lines = util::read_lines(path / "in.tsv");
    auto labels = read_labels(path / "expected.tsv");
    if (in_lines.size() != labels.size())
      throw FormatError("in.tsv has " + std::to_string(in_lines.size()) + " lines but expected.tsv has " +
                        std::to_string(labels.size()));
    out.reserve(labels.size());
    for (std::size_t i = 0; i < in_lines.size(); ++i)
      out.push_back({parse_in_fields(util::split(in_lines[i], '\t'), i + 1), labels[i], Provenance::Adjudicated});
  } else {
    auto lines = util::read_lines(path);
    out.reserve(lines.size());
    for (std::size_t i = 0; i < lines.size(); ++i) {
      auto f = util::split(lines[i], '\t');
      if (f.empty()) throw FormatError("empty line", i + 1);
      auto l = parse_label_token(f[0]);
      if (!l) throw FormatError("malformed label token '" + std::string(f[0]) + "'", i + 1);
      f.erase(f.begin());
      out.push_back({parse_in_fields(f, i + 1), *l, Provenance::Adjudicated});
    }
  }
  std::unordered_set<std::string_view> seen;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (!seen.insert(out[i].snippet.id).second)
      throw FormatError("duplicate snippet id " + out[i].snippet.id, i + 1);
  return out;
}

inline void write_dataset(const std::vector<LabeledSnippet>& records, const std::filesystem::path& path,
                          Layout layout) {
  if (layout == Layout::PairedInExpected) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw IoError("cannot create " + path.string() + ": " + ec.message());
    std::string in, expected;
    for (std::size_t i = 0; i < records.size(); ++i) {
      validate(records[i].snippet, i + 1);
      in += to_in_line(records[i].snippet);
      in += '\n';
      expected += label_token(records[i].label);
      expected += '\n';
    }
    util::write_file(path / "in.tsv", in);
    util::write_file(path / "expected.tsv", expected);
  } else {
    std::string data;
    for (std::size_t i = 0; i < records.size(); ++i) {
      validate(records[i].snippet, i + 1);
      data += label_token(records[i].label);
      data += '\t';
      data += to_in_line(records[i].snippet);
      data += '\n';
    }
    util::write_file(path, data);
  }
}

// --- splitting ------------------------------------------------------------

namespace detail {

// ratio * n, snapped to the nearest integer when within floating noise of it.
inline double quota(double ratio, std::size_t n) {
  double q = ratio * static_cast<double>(n);
  double r = std::round(q);
  if (std::abs(q - r) <= 1e-9 * std::max<double>(1.0, static_cast<double>(n))) return r;
  return q;
}

// Hamilton (largest-remainder) apportionment of n items over the ratios.
// Ties on the remainder go to the lower index.
inline std::array<std::size_t, 3> apportion(const std::array<double, 3>& ratios, std::size_t n) {
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> rem{};
  std::size_t assigned = 0;
  for (std::size_t j = 0; j < 3; ++j) {
    double q = quota(ratios[j], n);
    sizes[j] = static_cast<std::size_t>(std::floor(q));
    rem[j] = q - std::floor(q);
    assigned += sizes[j];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return rem[a] > rem[b]; });
  // Remainders sum to the shortfall (< 3), so more than `shortfall` parts
  // have a positive remainder and the top ones receive a unit each.
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k]];
  return sizes;
}

// Rounds the cell-by-part quota matrix to integers so that every row sums to
// its cell size, every column sums to the part size, and every entry is the
// floor of its quota or one more. Greedy by descending remainder, then
// augmenting paths in the cell/part bipartite graph to fix what greedy left.
inline std::vector<std::array<std::size_t, 3>> round_cells(const std::vector<std::size_t>& cell_sizes,
                                                           const std::array<double, 3>& ratios,
                                                           const std::array<std::size_t, 3>& part_sizes) {
  const std::size_t nc = cell_sizes.size();
  std::vector<std::array<std::size_t, 3>> counts(nc);
  std::vector<std::array<double, 3>> frac(nc);
  std::vector<std::size_t> row_need(nc);
  std::array<std::size_t, 3> col_need = part_sizes;
  for (std::size_t c = 0; c < nc; ++c) {
    std::size_t base = 0;
    for (std::size_t j = 0; j < 3; ++j) {
      double q = quota(ratios[j], cell_sizes[c]);
      counts[c][j] = static_cast<std::size_t>(std::floor(q));
      frac[c][j] = q - std::floor(q);
      base += counts[c][j];
      col_need[j] -= counts[c][j];
    }
    row_need[c] = cell_sizes[c] - base;
  }
  // extra[c][j] is 0 or 1: the rounded-up unit on top of the floor.
  std::vector<std::array<int, 3>> extra(nc, {0, 0, 0});

  struct Edge {
    std::size_t c, j;
    double f;
  };
  std::vector<Edge> edges;
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t j = 0; j < 3; ++j)
      if (ratios[j] > 0) edges.push_back({c, j, frac[c][j]});
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) { return a.f > b.f; });
  for (const auto& e : edges) {
    if (row_need[e.c] > 0 && col_need[e.j] > 0 && e.f > 0) {
      extra[e.c][e.j] = 1;
      --row_need[e.c];
      --col_need[e.j];
    }
  }

  // Augment: from a cell with unmet need, alternate unused edge -> part,
  // used edge part -> another cell, until a part with unmet need is reached.
  auto augment = [&](std::size_t start, bool allow_zero_frac) {
    std::vector<int> cell_seen(nc, 0);
    std::vector<std::pair<std::size_t, std::size_t>> path;  // (cell, part) edges to flip on
    std::function<bool(std::size_t)> dfs = [&](std::size_t c) -> bool {
      cell_seen[c] = 1;
      for (std::size_t j = 0; j < 3; ++j) {
        if (ratios[j] <= 0 || extra[c][j]) continue;
        if (!allow_zero_frac && frac[c][j] <= 0) continue;
        if (col_need[j] > 0) {
          extra[c][j] = 1;
          --col_need[j];
          return true;
        }
        for (std::size_t c2 = 0; c2 < nc; ++c2) {
          if (cell_seen[c2] || !extra[c2][j]) continue;
          // Move c2's unit in part j to c, then c2 needs another part.
          extra[c2][j] = 0;
          extra[c][j] = 1;
          if (dfs(c2)) return true;
          extra[c][j] = 0;
          extra[c2][j] = 1;
        }
      }
      return false;
    };
    if (dfs(start)) {
      --row_need[start];
      return true;
    }
    return false;
  };
  for (bool allow_zero : {false, true})
    for (std::size_t c = 0; c < nc; ++c)
      while (row_need[c] > 0 && augment(c, allow_zero)) {
      }
  for (std::size_t c = 0; c < nc; ++c) {
    if (row_need[c] != 0) throw Error("stratified split: no feasible cell rounding");
    for (std::size_t j = 0; j < 3; ++j) counts[c][j] += static_cast<std::size_t>(extra[c][j]);
  }
  return counts;
}

}  // namespace detail

// Stratification cell key: theme index (8 = unthemed) * 2 + label.
inline std::size_t cell_of(const LabeledSnippet& r) {
  std::size_t theme = r.snippet.theme ? static_cast<std::size_t>(*r.snippet.theme) : kAllThemes.size();
  return theme * 2 + static_cast<std::size_t>(r.label);
}

inline std::array<std::size_t, 3> split_sizes(const std::array<double, 3>& ratios, std::size_t n) {
  return detail::apportion(ratios, n);
}

// Partitions records into train/validation/test, preserving the joint
// (theme, label) distribution. Within each part, input order is kept.
inline DatasetSplit stratified_split(const std::vector<LabeledSnippet>& records, const std::array<double, 3>& ratios,
                                     std::uint64_t seed) {
  if (records.empty()) throw Error("stratified_split: empty input");
  for (double r : ratios)
    if (r < 0 || !std::isfinite(r)) throw Error("stratified_split: ratios must be non-negative");
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
    throw Error("stratified_split: ratios must sum to 1");

  const std::size_t n_cells = (kAllThemes.size() + 1) * 2;
  std::vector<std::vector<std::size_t>> members(n_cells);
  for (std::size_t i = 0; i < records.size(); ++i) members[cell_of(records[i])].push_back(i);

  std::vector<std::size_t> cell_sizes(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) cell_sizes[c] = members[c].size();
  auto part_sizes = detail::apportion(ratios, records.size());
  auto counts = detail::round_cells(cell_sizes, ratios, part_sizes);

  std::vector<std::uint8_t> part_of(records.size());
  util::Rng rng(seed);
  for (std::size_t c = 0; c < n_cells; ++c) {
    auto& m = members[c];
    rng.shuffle(m);
    std::size_t k = 0;
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t t = 0; t < counts[c][j]; ++t) part_of[m[k++]] = static_cast<std::uint8_t>(j);
  }

  DatasetSplit out;
  out.seed = seed;
  out.train.reserve(part_sizes[0]);
  out.validation.reserve(part_sizes[1]);
  out.test.reserve(part_sizes[2]);
  for (std::size_t i = 0; i < records.size(); ++i) {
    switch (part_of[i]) {
      case 0: out.train.push_back(records[i]); break;
      case 1: out.validation.push_back(records[i]); break;
      default: out.test.push_back(records[i]); break;
    }
  }
  return out;
}

// --- reporting ------------------------------------------------------------

// 100 * count / total in hundredths, rounded half-up with exact integers.
inline std::int64_t percent_x100(std::size_t count, std::size_t total) {
  if (total == 0) return 0;
  auto num = static_cast<std::int64_t>(count) * 20000;
  auto den = static_cast<std::int64_t>(total) * 2;
  return (num + static_cast<std::int64_t>(total)) / den;
}

inline DistributionReport distribution_report(const std::vector<LabeledSnippet>& records) {
  DistributionReport rep;
  rep.total = records.size();
  std::array<std::size_t, kAllThemes.size() + 1> theme_counts{};
  std::array<std::size_t, 2> label_counts{};
  for (const auto& r : records) {
    theme_counts[r.snippet.theme ? static_cast<std::size_t>(*r.snippet.theme) : kAllThemes.size()]++;
    label_counts[static_cast<std::size_t>(r.label)]++;
  }
  for (std::size_t t = 0; t < theme_counts.size(); ++t) {
    if (theme_counts[t] == 0) continue;
    std::string name(t < kAllThemes.size() ? to_string(kAllThemes[t]) : kUnthemed);
    rep.themes.push_back({name, theme_counts[t], percent_x100(theme_counts[t], rep.total)});
  }
  if (label_counts[1]) rep.labels.push_back({"Interesting", label_counts[1], percent_x100(label_counts[1], rep.total)});
  if (label_counts[0])
    rep.labels.push_back({"NotInteresting", label_counts[0], percent_x100(label_counts[0], rep.total)});
  return rep;
}

inline std::string render(const DistributionReport& rep) {
  std::string out;
  auto row = [&](const DistributionRow& r) {
    out += r.name + '\t' + std::to_string(r.count) + '\t' + r.percent() + "%\n";
  };
  out += "theme\tcount\tpercent\n";
  for (const auto& r : rep.themes) row(r);
  out += "label\tcount\tpercent\n";
  for (const auto& r : rep.labels) row(r);
  out += "total\t" + std::to_string(rep.total) + '\n';
  return out;
}

}  // namespace corpus
}  // namespace needle
