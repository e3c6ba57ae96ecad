// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "needle/corpus.hpp"
#include "needle/util.hpp"

namespace needle {

enum class AnnotationBasis { SnippetOnly, FullPage };

enum class TaskStatus { Pending, PartiallyDone, Done };

struct AnnotationTask {
  std::string snippet_id;
  std::array<std::string, 2> annotators;
  TaskStatus status = TaskStatus::Pending;
};

struct Annotation {
  std::string snippet_id;
  std::string annotator_id;
  Label verdict = Label::NotInteresting;
  AnnotationBasis basis = AnnotationBasis::SnippetOnly;
  Timestamp created_at{};

  bool operator==(const Annotation&) const = default;
};

struct AgreementReport {
  std::size_t items = 0;
  double observed = 0;          // p_o
  double expected = 0;          // p_e
  std::optional<double> kappa;  // empty when p_e == 1
};

namespace annotation {

// Each snippet gets two distinct annotators. Annotators are laid out in a
// seeded random cycle and handed out two at a time, so per-annotator loads
// differ by at most one.
inline std::vector<AnnotationTask> assign(std::span<const std::string> snippet_ids,
                                          std::span<const std::string> annotator_ids, std::uint64_t seed) {
  std::set<std::string> distinct(annotator_ids.begin(), annotator_ids.end());
  if (distinct.size() < 2) throw Error("assign: at least two distinct annotators are required");
  if (distinct.size() != annotator_ids.size()) throw Error("assign: duplicate annotator id");
  std::vector<std::string> cycle(annotator_ids.begin(), annotator_ids.end());
  util::Rng rng(seed);
  rng.shuffle(cycle);
  const std::size_t k = cycle.size();
  std::vector<AnnotationTask> tasks;
  tasks.reserve(snippet_ids.size());
  for (std::size_t i = 0; i < snippet_ids.size(); ++i)
    tasks.push_back({snippet_ids[i], {cycle[(2 * i) % k], cycle[(2 * i + 1) % k]}, TaskStatus::Pending});
  return tasks;
}

inline std::vector<AnnotationTask> assign(std::span<const Snippet> snippets, std::span<const std::string> annotator_ids,
                                          std::uint64_t seed) {
  std::vector<std::string> ids;
  ids.reserve(snippets.size());
  for (const auto& s : snippets) ids.push_back(s.id);
  return assign(std::span<const std::string>(ids), annotator_ids, seed);
}

// Interesting if at least one annotator said so.
inline Label adjudicate(const Annotation& a1, const Annotation& a2) {
  if (a1.snippet_id != a2.snippet_id) throw Error("adjudicate: annotations for different snippets");
  if (a1.annotator_id == a2.annotator_id) throw Error("adjudicate: same annotator twice for " + a1.snippet_id);
  return a1.verdict == Label::Interesting || a2.verdict == Label::Interesting ? Label::Interesting
                                                                                : Label::NotInteresting;
}

// Keeps the last annotation per (snippet, annotator), in order of first
// appearance.
inline std::vector<Annotation> latest(std::span<const Annotation> journal) {
  std::map<std::pair<std::string, std::string>, std::size_t> pos;
  std::vector<Annotation> out;
  for (const auto& a : journal) {
    auto [it, inserted] = pos.try_emplace({a.snippet_id, a.annotator_id}, out.size());
    if (inserted)
      out.push_back(a);
    else
      out[it->second] = a;
  }
  return out;
}

// snippet id -> its (deduplicated) annotations, in journal order.
inline std::map<std::string, std::vector<Annotation>> by_snippet(std::span<const Annotation> journal) {
  std::map<std::string, std::vector<Annotation>> out;
  for (auto& a : latest(journal)) out[a.snippet_id].push_back(std::move(a));
  return out;
}

inline std::map<std::string, Label> adjudicate_all(std::span<const Annotation> journal) {
  std::map<std::string, Label> out;
  for (const auto& [id, anns] : by_snippet(journal)) {
    if (anns.size() != 2)
      throw Error("snippet " + id + " has " + std::to_string(anns.size()) + " annotations, expected 2");
    out.emplace(id, adjudicate(anns[0], anns[1]));
  }
  return out;
}

inline void update_status(std::vector<AnnotationTask>& tasks, std::span<const Annotation> journal) {
  auto grouped = by_snippet(journal);
  for (auto& t : tasks) {
    std::size_t done = 0;
    if (auto it = grouped.find(t.snippet_id); it != grouped.end())
      for (const auto& a : it->second)
        if (a.annotator_id == t.annotators[0] || a.annotator_id == t.annotators[1]) ++done;
    t.status = done == 0 ? TaskStatus::Pending : done == 1 ? TaskStatus::PartiallyDone : TaskStatus::Done;
  }
}

// Observed agreement and Cohen's kappa. Annotator pairs rotate across
// snippets, so chance agreement uses the pooled verdict marginals.
inline AgreementReport agreement(std::span<const Annotation> journal) {
  AgreementReport rep;
  std::size_t agree = 0, interesting = 0;
  for (const auto& [id, anns] : by_snippet(journal)) {
    if (anns.size() != 2)
      throw Error("agreement: snippet " + id + " has " + std::to_string(anns.size()) + " annotations, expected 2");
    ++rep.items;
    if (anns[0].verdict == anns[1].verdict) ++agree;
    for (const auto& a : anns) interesting += a.verdict == Label::Interesting;
  }
  if (rep.items == 0) throw Error("agreement: no annotated snippets");
  const double n = static_cast<double>(rep.items);
  rep.observed = static_cast<double>(agree) / n;
  const double p_i = static_cast<double>(interesting) / (2 * n);
  rep.expected = p_i * p_i + (1 - p_i) * (1 - p_i);
  if (rep.expected < 1.0) rep.kappa = (rep.observed - rep.expected) / (1.0 - rep.expected);
  return rep;
}

// --- journal ----------------------------------------------------------------

inline std::string_view verdict_token(Label l) { return l == Label::Interesting ? "interesting" : "not_interesting"; }
inline std::string_view basis_token(AnnotationBasis b) { return b == AnnotationBasis::FullPage ? "page" : "snippet"; }

inline std::string to_journal_line(const Annotation& a) {
  return a.snippet_id + '\t' + a.annotator_id + '\t' + std::string(verdict_token(a.verdict)) + '\t' +
         std::string(basis_token(a.basis)) + '\t' + util::format_rfc3339(a.created_at);
}

inline Annotation parse_journal_line(std::string_view line, std::size_t lineno) {
  auto f = util::split(line, '\t');
  if (f.size() != 5) throw FormatError("annotation journal: expected 5 fields", lineno);
  Annotation a;
  a.snippet_id = f[0];
  a.annotator_id = f[1];
  if (a.snippet_id.empty() || a.annotator_id.empty()) throw FormatError("annotation journal: empty id", lineno);
  if (f[2] == "interesting")
    a.verdict = Label::Interesting;
  else if (f[2] == "not_interesting")
    a.verdict = Label::NotInteresting;
  else
    throw FormatError("annotation journal: bad verdict '" + std::string(f[2]) + "'", lineno);
  if (f[3] == "snippet")
    a.basis = AnnotationBasis::SnippetOnly;
  else if (f[3] == "page")
    a.basis = AnnotationBasis::FullPage;
  else
    throw FormatError("annotation journal: bad basis '" + std::string(f[3]) + "'", lineno);
  try {
    a.created_at = util::parse_rfc3339(f[4]);
  } catch (const FormatError& e) {
    throw FormatError(e.what(), lineno);
  }
  return a;
}

inline std::vector<Annotation> read_journal(const std::filesystem::path& path) {
  auto lines = util::read_lines(path);
  std::vector<Annotation> out;
  out.reserve(lines.size());
  for (std::size_t i = 0; i < lines.size(); ++i) out.push_back(parse_journal_line(lines[i], i + 1));
  return out;
}

// Append-only journal with a single serialized writer.
class Journal {
 public:
  explicit Journal(std::filesystem::path path) : path_(std::move(path)) {}

  void append(const Annotation& a) {
    std::string line = to_journal_line(a);
    line += '\n';
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + path_.string());
    out << line;
    out.flush();
    if (!out) throw IoError("append failed: " + path_.string());
  }

  std::vector<Annotation> load() const {
    std::lock_guard lock(mu_);
    if (!std::filesystem::exists(path_)) return {};
    return read_journal(path_);
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
};

}  // namespace annotation
}  // namespace needle
