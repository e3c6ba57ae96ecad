// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include "needle/corpus.hpp"
#include "needle/features.hpp"
#include "needle/util.hpp"

namespace needle {

inline constexpr std::string_view kSlot = "⟨slot⟩";

struct ExpansionLexicon {
  // Lexicon order is significant: it fixes the order of expanded queries.
  std::vector<std::pair<std::string, std::vector<std::string>>> synonyms;
  std::vector<std::string> templates;

  void validate() const {
    for (const auto& [term, syns] : synonyms) {
      if (term.empty()) throw FormatError("lexicon: empty term");
      for (const auto& s : syns)
        if (s == term) throw FormatError("lexicon: term '" + term + "' maps to itself");
    }
    for (const auto& t : templates) {
      auto first = t.find(kSlot);
      if (first == std::string::npos || t.find(kSlot, first + 1) != std::string::npos)
        throw FormatError("lexicon: template must contain exactly one slot marker: '" + t + "'");
    }
  }
};

struct SearchResult {
  std::string url;
  std::string title;
  std::string snippet_text;
};

// fetch(query, page_index) -> results on that SERP page, in rank order.
// Throwing marks the fetch as failed.
class SearchConnector {
 public:
  virtual ~SearchConnector() = default;
  virtual std::vector<SearchResult> fetch(const std::string& query, std::size_t page_index) = 0;
};

// Token bucket with a burst of one request; rate <= 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second) : rate_(requests_per_second) {}

  void acquire() {
    if (rate_ <= 0) return;
    using clock = std::chrono::steady_clock;
    const auto interval = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / rate_));
    clock::time_point slot;
    {
      std::lock_guard lock(mu_);
      auto now = clock::now();
      slot = std::max(now, next_);
      next_ = slot + interval;
    }
    std::this_thread::sleep_until(slot);
  }

  double rate() const { return rate_; }

 private:
  double rate_;
  std::mutex mu_;
  std::chrono::steady_clock::time_point next_{};
};

struct SearchEngineSpec {
  std::string name;
  std::size_t pages_per_query = 10;
  double rate_limit = 1.0;  // requests per second
  std::shared_ptr<SearchConnector> connector;
};

struct EngineStats {
  std::size_t pages_requested = 0;
  std::size_t failed_fetches = 0;
  std::size_t fetched = 0;  // results returned by the engine
  std::size_t invalid = 0;  // results without text or with a malformed url
  std::size_t deduped = 0;  // snippets kept after deduplication

  bool operator==(const EngineStats&) const = default;
};

enum class CollectionStatus { Ok, AllEnginesUnreachable };

struct CollectionJob {
  std::vector<std::string> queries;
  std::vector<std::string> engines;
  Timestamp started_at{};
  Timestamp finished_at{};
  std::map<std::string, EngineStats> stats;
  CollectionStatus status = CollectionStatus::Ok;
};

struct CollectionResult {
  std::vector<Snippet> snippets;
  CollectionJob job;
};

// Serves canned pages keyed by (query, page). Thread-safe; counts calls.
class FixtureConnector : public SearchConnector {
 public:
  FixtureConnector() = default;

  void add(const std::string& query, std::size_t page, SearchResult r) { pages_[{query, page}].push_back(std::move(r)); }

  void set_failing(bool failing) { failing_ = failing; }

  std::vector<SearchResult> fetch(const std::string& query, std::size_t page_index) override {
    ++calls_;
    if (failing_) throw Error("fixture engine unreachable");
    auto it = pages_.find({query, page_index});
    if (it == pages_.end()) return {};
    return it->second;
  }

  std::size_t calls() const { return calls_; }

  // "query<TAB>page<TAB>url<TAB>title<TAB>snippet_text" per line; page is
  // 0-based. Results on a page keep file order.
  static std::shared_ptr<FixtureConnector> load(const std::filesystem::path& path) {
    auto c = std::make_shared<FixtureConnector>();
    auto lines = util::read_lines(path);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty() || lines[i][0] == '#') continue;
      auto f = util::split(lines[i], '\t');
      if (f.size() != 5) throw FormatError(path.string() + ": expected 5 fields", i + 1);
      auto page = util::parse_int(f[1]);
      if (page < 0) throw FormatError(path.string() + ": negative page", i + 1);
      c->add(std::string(f[0]), static_cast<std::size_t>(page),
             {std::string(f[2]), std::string(f[3]), std::string(f[4])});
    }
    return c;
  }

 private:
  std::map<std::pair<std::string, std::size_t>, std::vector<SearchResult>> pages_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<bool> failing_{false};
};

namespace collector {

// Lowercases (Latin/Greek/Cyrillic) and collapses whitespace.
inline std::string fold(std::string_view text) {
  std::string out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::int32_t cp = util::decode_utf8(text, i);
    if (cp < 0) continue;
    util::append_utf8(out, features::detail::fold_case(cp));
  }
  return util::collapse_whitespace(out);
}

inline ExpansionLexicon parse_lexicon(std::string_view text) {
  ExpansionLexicon lex;
  auto lines = util::split(text, '\n');
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto line = lines[i];
    if (!line.empty() && line.back() == '\r') throw FormatError("lexicon: CRLF line ending", i + 1);
    if (util::trim(line).empty() || line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string_view::npos) throw FormatError("lexicon: expected a tab separator", i + 1);
    auto key = line.substr(0, tab);
    auto value = line.substr(tab + 1);
    if (key == "TEMPLATE") {
      lex.templates.emplace_back(value);
      continue;
    }
    std::vector<std::string> syns;
    for (auto s : util::split(value, ',')) {
      auto t = fold(s);
      if (!t.empty()) syns.push_back(std::move(t));
    }
    lex.synonyms.emplace_back(fold(key), std::move(syns));
  }
  lex.validate();
  return lex;
}

inline ExpansionLexicon load_lexicon(const std::filesystem::path& path) {
  auto text = util::read_file(path);
  if (!util::valid_utf8(text)) throw FormatError(path.string() + ": invalid UTF-8");
  return parse_lexicon(text);
}

namespace detail {

inline bool word_boundary(std::string_view s, std::size_t pos) {
  if (pos == 0 || pos >= s.size()) return true;
  // Boundary between two bytes: an ASCII non-alphanumeric on either side.
  auto is_word = [](unsigned char c) { return c >= 0x80 || std::isalnum(c); };
  return !is_word(static_cast<unsigned char>(s[pos - 1])) || !is_word(static_cast<unsigned char>(s[pos]));
}

// Replaces every whole-word occurrence of `term`; nullopt if none.
inline std::optional<std::string> substitute(std::string_view text, std::string_view term, std::string_view with) {
  std::string out;
  bool hit = false;
  std::size_t i = 0;
  while (i < text.size()) {
    auto pos = text.find(term, i);
    if (pos == std::string_view::npos) break;
    if (word_boundary(text, pos) && word_boundary(text, pos + term.size())) {
      out.append(text.substr(i, pos - i));
      out.append(with);
      i = pos + term.size();
      hit = true;
    } else {
      out.append(text.substr(i, pos + 1 - i));
      i = pos + 1;
    }
  }
  if (!hit) return std::nullopt;
  out.append(text.substr(i));
  return out;
}

}  // namespace detail

// Original inquiry first, then one query per (term, synonym) substitution
// in lexicon order, then one per template. Duplicates keep their first
// position. Substitutions operate on the case-folded inquiry.
inline std::vector<std::string> expand_query(std::string_view inquiry, const ExpansionLexicon& lexicon) {
  auto original = util::collapse_whitespace(inquiry);
  if (original.empty()) throw Error("expand_query: empty inquiry");
  std::vector<std::string> out;
  std::set<std::string> seen;
  auto push = [&](std::string q) {
    if (!q.empty() && seen.insert(q).second) out.push_back(std::move(q));
  };
  push(original);
  const auto folded = fold(original);
  for (const auto& [term, syns] : lexicon.synonyms)
    for (const auto& syn : syns)
      if (auto q = detail::substitute(folded, term, syn)) push(std::move(*q));
  for (const auto& t : lexicon.templates) {
    std::string q = t;
    q.replace(q.find(kSlot), kSlot.size(), original);
    push(util::collapse_whitespace(q));
  }
  return out;
}

// Lowercase scheme and host, drop the fragment and any trailing slash.
inline std::string normalize_url(std::string_view url) {
  std::string u(url.substr(0, url.find('#')));
  auto sep = u.find("://");
  if (sep != std::string::npos) {
    auto host_end = u.find_first_of("/?", sep + 3);
    if (host_end == std::string::npos) host_end = u.size();
    for (std::size_t i = 0; i < host_end; ++i)
      if (u[i] >= 'A' && u[i] <= 'Z') u[i] = static_cast<char>(u[i] - 'A' + 'a');
  }
  while (!u.empty() && u.back() == '/' && (sep == std::string::npos || u.size() > sep + 3)) u.pop_back();
  return u;
}

inline std::string dedupe_key(std::string_view url, std::string_view snippet_text) {
  std::string material = normalize_url(url);
  material += '\x1f';
  material += fold(snippet_text);
  return util::hex64(util::fnv1a64(material));
}

inline std::string dedupe_key(const Snippet& s) { return dedupe_key(s.url, s.snippet_text); }

using Clock = std::function<Timestamp()>;

// Fetches up to pages_per_query SERP pages for every (query, engine) pair,
// one thread per engine. Paging stops early on an empty page or a failed
// fetch. Output is canonicalized by (engine, query, page, rank) and then
// deduplicated, so it does not depend on scheduling. Snippet ids are the
// dedupe keys.
inline CollectionResult collect(const std::vector<std::string>& queries, const std::vector<SearchEngineSpec>& engines,
                                std::optional<std::size_t> pages_per_query = std::nullopt,
                                const Clock& clock = util::now_utc) {
  if (queries.empty()) throw Error("collect: no queries");
  std::set<std::string_view> names;
  for (const auto& e : engines)
    if (e.name.empty() || !names.insert(e.name).second) throw Error("collect: engine names must be unique and nonempty");
  struct Raw {
    std::size_t engine, query, page, rank;
    SearchResult r;
  };
  CollectionResult res;
  res.job.queries = queries;
  res.job.started_at = clock();
  std::vector<std::vector<Raw>> per_engine(engines.size());
  std::vector<EngineStats> stats(engines.size());
  {
    std::vector<std::jthread> workers;
    workers.reserve(engines.size());
    for (std::size_t e = 0; e < engines.size(); ++e) {
      workers.emplace_back([&, e] {
        const auto& spec = engines[e];
        const std::size_t pages = pages_per_query.value_or(spec.pages_per_query);
        RateLimiter limiter(spec.rate_limit);
        for (std::size_t q = 0; q < queries.size(); ++q) {
          for (std::size_t p = 0; p < pages; ++p) {
            limiter.acquire();
            ++stats[e].pages_requested;
            std::vector<SearchResult> page;
            try {
              if (!spec.connector) throw Error("no connector");
              page = spec.connector->fetch(queries[q], p);
            } catch (const std::exception&) {
              ++stats[e].failed_fetches;
              break;
            }
            if (page.empty()) break;
            stats[e].fetched += page.size();
            for (std::size_t r = 0; r < page.size(); ++r) per_engine[e].push_back({e, q, p, r, std::move(page[r])});
          }
        }
      });
    }
  }

  const Timestamp stamp = clock();
  std::set<std::string> seen;
  bool any_reachable = engines.empty();
  for (std::size_t e = 0; e < engines.size(); ++e) {
    res.job.engines.push_back(engines[e].name);
    if (stats[e].failed_fetches < stats[e].pages_requested) any_reachable = true;
    // Workers append in (query, page, rank) order already.
    for (auto& raw : per_engine[e]) {
      Snippet s;
      s.url = util::trim(raw.r.url);
      s.title = util::collapse_whitespace(raw.r.title);
      s.snippet_text = util::collapse_whitespace(raw.r.snippet_text);
      if (s.snippet_text.empty() || !corpus::valid_url(s.url) || !util::valid_utf8(s.title) ||
          !util::valid_utf8(s.snippet_text)) {
        ++stats[e].invalid;
        continue;
      }
      s.id = dedupe_key(s);
      if (!seen.insert(s.id).second) continue;
      s.query = queries[raw.query];
      s.engine = engines[e].name;
      s.collected_at = stamp;
      ++stats[e].deduped;
      res.snippets.push_back(std::move(s));
    }
    res.job.stats[engines[e].name] = stats[e];
  }
  res.job.status = any_reachable ? CollectionStatus::Ok : CollectionStatus::AllEnginesUnreachable;
  res.job.finished_at = clock();
  return res;
}

}  // namespace collector
}  // namespace needle
