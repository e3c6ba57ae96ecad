// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <algorithm>
#include <cmath>
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

// Ordered by severity: Green < Yellow < Red.
enum class Verdict { Green = 0, Yellow = 1, Red = 2 };

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Red: return "red";
    case Verdict::Yellow: return "yellow";
    case Verdict::Green: return "green";
  }
  return "?";
}

inline std::optional<Verdict> parse_verdict(std::string_view s) {
  if (s == "red") return Verdict::Red;
  if (s == "yellow") return Verdict::Yellow;
  if (s == "green") return Verdict::Green;
  return std::nullopt;
}

struct Thresholds {
  double red = 0.7;
  double yellow = 0.3;

  void validate() const {
    if (!(yellow >= 0 && yellow < red && red <= 1)) throw Error("thresholds: need 0 <= yellow < red <= 1");
  }
};

struct TriageResult {
  Snippet snippet;
  double p = 0;
  Verdict verdict = Verdict::Green;
};

enum class FeedbackLabel { Criminal, NonCriminal };

inline std::string_view to_string(FeedbackLabel l) { return l == FeedbackLabel::Criminal ? "criminal" : "non_criminal"; }

inline std::optional<FeedbackLabel> parse_feedback_label(std::string_view s) {
  if (s == "criminal") return FeedbackLabel::Criminal;
  if (s == "non_criminal") return FeedbackLabel::NonCriminal;
  return std::nullopt;
}

inline Label to_label(FeedbackLabel l) {
  return l == FeedbackLabel::Criminal ? Label::Interesting : Label::NotInteresting;
}

struct FeedbackEvent {
  std::string snippet_id;
  FeedbackLabel label = FeedbackLabel::NonCriminal;
  Verdict prior_verdict = Verdict::Green;
  Timestamp timestamp{};
  std::string operator_id;

  bool operator==(const FeedbackEvent&) const = default;
};

namespace triage {

// Red iff p >= red; Yellow iff yellow <= p < red; Green otherwise.
inline Verdict verdict(double p, const Thresholds& t = {}) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error("verdict: probability outside [0,1]");
  if (p >= t.red) return Verdict::Red;
  if (p >= t.yellow) return Verdict::Yellow;
  return Verdict::Green;
}

// Red before Yellow before Green, then p descending, then id ascending.
inline bool rank_before(const TriageResult& a, const TriageResult& b) {
  if (a.verdict != b.verdict) return a.verdict > b.verdict;
  if (a.p != b.p) return a.p > b.p;
  return a.snippet.id < b.snippet.id;
}

inline std::vector<TriageResult> rank(std::vector<TriageResult> results) {
  std::stable_sort(results.begin(), results.end(), rank_before);
  return results;
}

// --- feedback journal ---------------------------------------------------------

inline std::string to_journal_line(const FeedbackEvent& e) {
  return e.snippet_id + '\t' + std::string(to_string(e.label)) + '\t' + std::string(to_string(e.prior_verdict)) +
         '\t' + util::format_rfc3339(e.timestamp) + '\t' + e.operator_id;
}

inline FeedbackEvent parse_journal_line(std::string_view line, std::size_t lineno) {
  auto f = util::split(line, '\t');
  if (f.size() != 5) throw FormatError("feedback journal: expected 5 fields", lineno);
  FeedbackEvent e;
  e.snippet_id = f[0];
  if (e.snippet_id.empty()) throw FormatError("feedback journal: empty snippet id", lineno);
  auto label = parse_feedback_label(f[1]);
  if (!label) throw FormatError("feedback journal: bad label '" + std::string(f[1]) + "'", lineno);
  e.label = *label;
  auto prior = parse_verdict(f[2]);
  if (!prior) throw FormatError("feedback journal: bad verdict '" + std::string(f[2]) + "'", lineno);
  e.prior_verdict = *prior;
  try {
    e.timestamp = util::parse_rfc3339(f[3]);
  } catch (const FormatError& err) {
    throw FormatError(err.what(), lineno);
  }
  e.operator_id = f[4];
  return e;
}

inline constexpr std::string_view kRetrainMarker = "#retrain";

// Append-only record of operator decisions.
//
// The journal holds one line per event plus "#retrain<TAB>n" markers, each
// meaning a retrain finished that had consumed the first n events. The
// snippet archive (in.tsv format) keeps the content of every snippet that
// received feedback so merges can add snippets absent from the base set.
// Reopening the same files reproduces the store state exactly.
class FeedbackStore {
 public:
  // In-memory store (nothing persisted).
  FeedbackStore() = default;

  explicit FeedbackStore(std::filesystem::path journal)
      : journal_(std::move(journal)), archive_(journal_.string() + ".snippets.tsv") {
    replay();
  }

  void register_snippet(const Snippet& s) {
    std::lock_guard lock(mu_);
    known_.try_emplace(s.id, s);
  }

  bool knows(const std::string& id) const {
    std::lock_guard lock(mu_);
    return known_.count(id) != 0;
  }

  // Appends durably. Unknown snippets and a repeated (snippet, timestamp)
  // pair are rejected.
  void record(const FeedbackEvent& e) {
    std::lock_guard lock(mu_);
    auto it = known_.find(e.snippet_id);
    if (it == known_.end()) throw NotFoundError("unknown snippet id " + e.snippet_id);
    if (stamps_.count({e.snippet_id, e.timestamp}))
      throw Error("duplicate feedback for " + e.snippet_id + " at " + util::format_rfc3339(e.timestamp));
    if (!journal_.empty()) {
      if (!archived_.count(e.snippet_id)) {
        append_line(archive_, corpus::to_in_line(it->second));
        archived_.insert(e.snippet_id);
      }
      append_line(journal_, to_journal_line(e));
    }
    stamps_.insert({e.snippet_id, e.timestamp});
    events_.push_back(e);
  }

  std::size_t count() const {
    std::lock_guard lock(mu_);
    return events_.size();
  }

  std::size_t decisions_since_retrain() const {
    std::lock_guard lock(mu_);
    return events_.size() - consumed_;
  }

  // A retrain that trained on the first `consumed` events has finished.
  void mark_retrained(std::size_t consumed) {
    std::lock_guard lock(mu_);
    if (consumed > events_.size()) throw Error("mark_retrained: more events than recorded");
    if (!journal_.empty()) append_line(journal_, std::string(kRetrainMarker) + '\t' + std::to_string(consumed));
    consumed_ = std::max(consumed_, consumed);
    ++retrains_;
  }

  std::size_t retrains() const {
    std::lock_guard lock(mu_);
    return retrains_;
  }

  std::vector<FeedbackEvent> events() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  std::optional<Snippet> snippet(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = known_.find(id);
    if (it == known_.end()) return std::nullopt;
    return it->second;
  }

 private:
  static void append_line(const std::filesystem::path& path, const std::string& line) {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to " + path.string());
    out << line << '\n';
    out.flush();
    if (!out) throw IoError("append failed: " + path.string());
  }

  void replay() {
    if (std::filesystem::exists(archive_)) {
      for (auto& s : corpus::read_snippets(archive_)) {
        archived_.insert(s.id);
        known_.try_emplace(s.id, std::move(s));
      }
    }
    if (!std::filesystem::exists(journal_)) return;
    auto lines = util::read_lines(journal_);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].rfind(kRetrainMarker, 0) == 0) {
        auto f = util::split(lines[i], '\t');
        if (f.size() != 2) throw FormatError("feedback journal: bad retrain marker", i + 1);
        consumed_ = std::max(consumed_, static_cast<std::size_t>(util::parse_int(f[1])));
        ++retrains_;
        continue;
      }
      auto e = parse_journal_line(lines[i], i + 1);
      stamps_.insert({e.snippet_id, e.timestamp});
      events_.push_back(std::move(e));
    }
    if (consumed_ > events_.size()) throw FormatError("feedback journal: retrain marker beyond event count");
  }

  std::filesystem::path journal_;
  std::filesystem::path archive_;
  mutable std::mutex mu_;
  std::map<std::string, Snippet> known_;
  std::set<std::string> archived_;
  std::set<std::pair<std::string, Timestamp>> stamps_;
  std::vector<FeedbackEvent> events_;
  std::size_t consumed_ = 0;
  std::size_t retrains_ = 0;
};

inline void record_feedback(const FeedbackEvent& event, FeedbackStore& store) { store.record(event); }

inline bool should_retrain(const FeedbackStore& store, std::size_t n_threshold) {
  if (n_threshold == 0) throw Error("should_retrain: threshold must be >= 1");
  return store.decisions_since_retrain() >= n_threshold;
}

// Latest event per snippet: greatest timestamp, later journal position on
// equal timestamps.
inline std::map<std::string, FeedbackEvent> latest_events(std::span<const FeedbackEvent> events) {
  std::map<std::string, FeedbackEvent> out;
  for (const auto& e : events) {
    auto [it, inserted] = out.try_emplace(e.snippet_id, e);
    if (!inserted && e.timestamp >= it->second.timestamp) it->second = e;
  }
  return out;
}

// Operator labels override base labels; snippets absent from the base are
// appended in id order.
inline std::vector<LabeledSnippet> merge_feedback(std::vector<LabeledSnippet> base, const FeedbackStore& store) {
  auto latest = latest_events(store.events());
  std::set<std::string> applied;
  for (auto& r : base) {
    auto it = latest.find(r.snippet.id);
    if (it == latest.end()) continue;
    r.label = to_label(it->second.label);
    r.provenance = Provenance::OperatorFeedback;
    applied.insert(r.snippet.id);
  }
  for (const auto& [id, e] : latest) {
    if (applied.count(id)) continue;
    auto s = store.snippet(id);
    if (!s) throw Error("merge_feedback: no content for snippet " + id);
    base.push_back({*s, to_label(e.label), Provenance::OperatorFeedback});
  }
  return base;
}

}  // namespace triage

using triage::FeedbackStore;

}  // namespace needle
