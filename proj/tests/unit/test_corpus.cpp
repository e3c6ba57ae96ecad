// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "needle/corpus.hpp"
#include "support/fixtures.hpp"

using namespace needle;
using fixtures::TempDir;

namespace {

std::vector<LabeledSnippet> random_records(std::size_t n, std::uint64_t seed) {
  util::Rng rng(seed);
  std::vector<LabeledSnippet> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = fixtures::make_snippet(fixtures::numbered("r", i), "tekst " + std::to_string(rng.next() % 100000) + " ąę");
    s.query = "zapytanie " + std::to_string(i % 7);
    s.engine = i % 2 ? "bing" : "google";
    s.title = i % 3 ? "Tytuł " + std::to_string(i) : "";
    if (i % 5) s.theme = kAllThemes[rng.below(8)];
    Label l = rng.below(10) == 0 ? Label::Interesting : Label::NotInteresting;
    out.push_back({s, l, Provenance::Adjudicated});
  }
  return out;
}

std::size_t cell_count(const std::vector<LabeledSnippet>& part, std::size_t cell) {
  return static_cast<std::size_t>(
      std::count_if(part.begin(), part.end(), [&](const auto& r) { return corpus::cell_of(r) == cell; }));
}

}  // namespace

TEST(Corpus, ReadsPairedLayout) {
  TempDir dir;
  util::write_file(dir / "in.tsv",
                   "a\tq\tg\thttps://a.pl/\t\tpierwszy\tDrugs\n"
                   "b\tq\tg\thttps://b.pl/x\tT\tdrugi\n"
                   "c\tq\tg\thttp://c.pl\t\ttrzeci\t\n");
  util::write_file(dir / "expected.tsv", "1\n0\n0\n");
  auto recs = corpus::read_dataset(dir.path(), Layout::PairedInExpected);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].label, Label::Interesting);
  EXPECT_EQ(recs[1].label, Label::NotInteresting);
  EXPECT_EQ(recs[2].label, Label::NotInteresting);
  EXPECT_EQ(recs[0].snippet.theme, Theme::Drugs);
  EXPECT_FALSE(recs[1].snippet.theme);
  EXPECT_FALSE(recs[2].snippet.theme);
  EXPECT_EQ(recs[1].snippet.title, "T");
}

TEST(Corpus, BadLabelTokenNamesLine) {
  TempDir dir;
  util::write_file(dir / "in.tsv", "a\tq\tg\thttps://a.pl/\t\tx\nb\tq\tg\thttps://a.pl/\t\ty\n");
  util::write_file(dir / "expected.tsv", "1\n2\n");
  try {
    corpus::read_dataset(dir.path(), Layout::PairedInExpected);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

TEST(Corpus, LineCountMismatch) {
  TempDir dir;
  util::write_file(dir / "in.tsv", "a\tq\tg\thttps://a.pl/\t\tx\n");
  util::write_file(dir / "expected.tsv", "1\n0\n");
  EXPECT_THROW(corpus::read_dataset(dir.path(), Layout::PairedInExpected), FormatError);
}

TEST(Corpus, InvalidRecordsRejected) {
  TempDir dir;
  util::write_file(dir / "expected.tsv", "1\n");
  for (const char* line : {"\tq\tg\thttps://a.pl/\t\tx\n", "a\tq\tg\thttps://a.pl/\t\t\n", "a\tq\tg\tnot a url\t\tx\n",
                           "a\tq\tg\thttps://a.pl/\t\tx\tNoSuchTheme\n", "a\tq\tg\thttps://a.pl/\tx\n",
                           "a\tq\tg\thttps://a.pl/\t\tbad \xfe\n"}) {
    util::write_file(dir / "in.tsv", line);
    EXPECT_THROW(corpus::read_dataset(dir.path(), Layout::PairedInExpected), FormatError) << line;
  }
  util::write_file(dir / "in.tsv", "a\tq\tg\thttps://a.pl/\t\tx\na\tq\tg\thttps://a.pl/\t\ty\n");
  util::write_file(dir / "expected.tsv", "1\n0\n");
  EXPECT_THROW(corpus::read_dataset(dir.path(), Layout::PairedInExpected), FormatError);
}

TEST(Corpus, EmptyListWritesZeroByteFiles) {
  TempDir dir;
  corpus::write_dataset({}, dir / "d", Layout::PairedInExpected);
  EXPECT_EQ(std::filesystem::file_size(dir / "d" / "in.tsv"), 0u);
  EXPECT_EQ(std::filesystem::file_size(dir / "d" / "expected.tsv"), 0u);
  corpus::write_dataset({}, dir / "single.tsv", Layout::SingleFileLabeled);
  EXPECT_EQ(std::filesystem::file_size(dir / "single.tsv"), 0u);
}

TEST(Corpus, OneRecordOneLineNoTrailingWhitespace) {
  TempDir dir;
  auto recs = random_records(1, 4);
  recs[0].snippet.theme.reset();
  corpus::write_dataset(recs, dir / "d", Layout::PairedInExpected);
  for (const char* f : {"in.tsv", "expected.tsv"}) {
    auto text = util::read_file(dir / "d" / f);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1) << f;
    ASSERT_GE(text.size(), 2u);
    EXPECT_NE(text[text.size() - 2], '\t');
    EXPECT_NE(text[text.size() - 2], ' ');
  }
}

TEST(Corpus, RoundTripThousandRecordsBothLayouts) {
  TempDir dir;
  auto recs = random_records(1000, 9);
  corpus::write_dataset(recs, dir / "p", Layout::PairedInExpected);
  EXPECT_EQ(corpus::read_dataset(dir / "p", Layout::PairedInExpected), recs);
  corpus::write_dataset(recs, dir / "s.tsv", Layout::SingleFileLabeled);
  EXPECT_EQ(corpus::read_dataset(dir / "s.tsv", Layout::SingleFileLabeled), recs);
}

TEST(Corpus, RoundTripTenThousandRecords) {
  TempDir dir;
  auto recs = random_records(10000, 10);
  corpus::write_dataset(recs, dir / "p", Layout::PairedInExpected);
  auto back = corpus::read_dataset(dir / "p", Layout::PairedInExpected);
  EXPECT_EQ(back, recs);
  // Rewriting the parsed records is byte-identical.
  corpus::write_dataset(back, dir / "q", Layout::PairedInExpected);
  EXPECT_EQ(util::read_file(dir / "p" / "in.tsv"), util::read_file(dir / "q" / "in.tsv"));
}

TEST(Corpus, WriteRejectsFieldsWithTabs) {
  TempDir dir;
  auto recs = random_records(2, 1);
  recs[1].snippet.title = "a\tb";
  EXPECT_THROW(corpus::write_dataset(recs, dir / "p", Layout::PairedInExpected), FormatError);
}

// --- split ----------------------------------------------------------------

TEST(Split, PublishedPartitionSizes) {
  const double n = 114432;
  auto sizes = corpus::split_sizes({92028 / n, 10570 / n, 11834 / n}, 114432);
  EXPECT_EQ(sizes, (std::array<std::size_t, 3>{92028, 10570, 11834}));
}

TEST(Split, AllToTrain) {
  auto recs = random_records(10, 2);
  auto s = corpus::stratified_split(recs, {1, 0, 0}, 5);
  EXPECT_EQ(s.train.size(), 10u);
  EXPECT_TRUE(s.validation.empty());
  EXPECT_TRUE(s.test.empty());
}

TEST(Split, Errors) {
  auto recs = random_records(10, 2);
  EXPECT_THROW(corpus::stratified_split({}, {0.8, 0.1, 0.1}, 1), Error);
  EXPECT_THROW(corpus::stratified_split(recs, {1.1, -0.1, 0}, 1), Error);
  EXPECT_THROW(corpus::stratified_split(recs, {0.8, 0.1, 0.2}, 1), Error);
}

// Brute-force oracle: count every cell in every part and compare with the
// real-valued share ratio * cell size.
void check_split(const std::vector<LabeledSnippet>& recs, const std::array<double, 3>& ratios, std::uint64_t seed) {
  auto s = corpus::stratified_split(recs, ratios, seed);
  std::array<const std::vector<LabeledSnippet>*, 3> parts{&s.train, &s.validation, &s.test};

  std::multiset<std::string> in_ids, out_ids;
  for (const auto& r : recs) in_ids.insert(r.snippet.id);
  for (auto* p : parts)
    for (const auto& r : *p) out_ids.insert(r.snippet.id);
  ASSERT_EQ(in_ids, out_ids);

  const double n = static_cast<double>(recs.size());
  for (std::size_t j = 0; j < 3; ++j) EXPECT_LE(std::abs(static_cast<double>(parts[j]->size()) - ratios[j] * n), 1.0);

  std::map<std::size_t, std::size_t> cells;
  for (const auto& r : recs) ++cells[corpus::cell_of(r)];
  for (const auto& [cell, c] : cells)
    for (std::size_t j = 0; j < 3; ++j) {
      double share = ratios[j] * static_cast<double>(c);
      EXPECT_LT(std::abs(static_cast<double>(cell_count(*parts[j], cell)) - share), 1.0 + 1e-9)
          << "cell " << cell << " part " << j;
    }

  // Input order is preserved within each part.
  std::map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < recs.size(); ++i) pos[recs[i].snippet.id] = i;
  for (auto* p : parts)
    for (std::size_t i = 1; i < p->size(); ++i) EXPECT_LT(pos[(*p)[i - 1].snippet.id], pos[(*p)[i].snippet.id]);
}

TEST(Split, HundredRecordsTwoThemesTenPositives) {
  std::vector<LabeledSnippet> recs;
  for (std::size_t i = 0; i < 100; ++i) {
    auto s = fixtures::make_snippet(fixtures::numbered("x", i), "t", i < 60 ? Theme::Drugs : Theme::Alcohol);
    Label l = (i % 10 == 3) ? Label::Interesting : Label::NotInteresting;
    recs.push_back({s, l, Provenance::Adjudicated});
  }
  check_split(recs, {0.8, 0.1, 0.1}, 42);
}

TEST(Split, PropertiesOverRandomInputs) {
  util::Rng rng(77);
  for (int trial = 0; trial < 60; ++trial) {
    auto recs = random_records(1 + rng.below(400), rng.next());
    double a = rng.uniform(), b = rng.uniform() * (1 - a);
    check_split(recs, {a, b, 1 - a - b}, rng.next());
  }
}

TEST(Split, Deterministic) {
  auto recs = random_records(500, 3);
  auto a = corpus::stratified_split(recs, {0.8, 0.1, 0.1}, 9);
  auto b = corpus::stratified_split(recs, {0.8, 0.1, 0.1}, 9);
  auto c = corpus::stratified_split(recs, {0.8, 0.1, 0.1}, 10);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.validation, b.validation);
  EXPECT_EQ(a.test, b.test);
  EXPECT_NE(a.validation, c.validation);
}

TEST(Split, ThemeCorpusSizesAndCells) {
  auto recs = fixtures::theme_corpus();
  const double n = 114432;
  check_split(recs, {92028 / n, 10570 / n, 11834 / n}, 2026);
  auto s = corpus::stratified_split(recs, {92028 / n, 10570 / n, 11834 / n}, 2026);
  EXPECT_EQ(s.train.size(), 92028u);
  EXPECT_EQ(s.validation.size(), 10570u);
  EXPECT_EQ(s.test.size(), 11834u);
}

// --- distribution ---------------------------------------------------------

// Exact rational oracle: 100 * c / t in hundredths, half-up, via quotient and
// remainder of c * 10000 / t.
std::string oracle_percent(std::size_t c, std::size_t t) {
  unsigned long long num = 10000ULL * c, q = num / t, r = num % t;
  if (2 * r >= t) ++q;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%llu.%02llu", q / 100, q % 100);
  return buf;
}

TEST(Distribution, ThemeCorpusPercentages) {
  auto rep = corpus::distribution_report(fixtures::theme_corpus());
  EXPECT_EQ(rep.total, 114432u);
  ASSERT_EQ(rep.themes.size(), 8u);
  std::map<std::string, std::string> pct;
  std::size_t sum = 0;
  for (std::size_t t = 0; t < 8; ++t) {
    EXPECT_EQ(rep.themes[t].count, fixtures::kThemeCounts[t]);
    EXPECT_EQ(rep.themes[t].percent(), oracle_percent(fixtures::kThemeCounts[t], 114432));
    pct[rep.themes[t].name] = rep.themes[t].percent();
    sum += rep.themes[t].count;
  }
  EXPECT_EQ(sum, rep.total);
  EXPECT_EQ(pct["Cigarettes"], "6.33");
  EXPECT_EQ(pct["WeaponsExplosives"], "4.39");
  EXPECT_EQ(pct["Alcohol"], "2.54");
  EXPECT_EQ(pct["SexCrime"], "2.19");
  EXPECT_EQ(pct["HumanTrafficking"], "1.02");
  EXPECT_EQ(pct["Drugs"], "70.00");
  ASSERT_EQ(rep.labels.size(), 2u);
  EXPECT_EQ(rep.labels[0].count + rep.labels[1].count, rep.total);
}

TEST(Distribution, SingleThemeAndEmpty) {
  std::vector<LabeledSnippet> recs;
  for (int i = 0; i < 3; ++i)
    recs.push_back({fixtures::make_snippet("i" + std::to_string(i), "t", Theme::Documents), Label::NotInteresting});
  auto rep = corpus::distribution_report(recs);
  ASSERT_EQ(rep.themes.size(), 1u);
  EXPECT_EQ(rep.themes[0].percent(), "100.00");
  auto empty = corpus::distribution_report({});
  EXPECT_EQ(empty.total, 0u);
  EXPECT_TRUE(empty.themes.empty());
  EXPECT_TRUE(empty.labels.empty());
}

TEST(Distribution, PercentMatchesOracleOnRandomFractions) {
  util::Rng rng(8);
  for (int i = 0; i < 20000; ++i) {
    std::size_t t = 1 + rng.below(1000000), c = rng.below(t + 1);
    DistributionRow row{"", c, corpus::percent_x100(c, t)};
    ASSERT_EQ(row.percent(), oracle_percent(c, t)) << c << "/" << t;
  }
  // Exact halves round up.
  EXPECT_EQ(corpus::percent_x100(1, 80000), 0);   // 0.00125 -> 0.00
  EXPECT_EQ(corpus::percent_x100(1, 20000), 1);   // 0.005 -> 0.01
  EXPECT_EQ(corpus::percent_x100(1, 8), 1250);    // 12.5 -> 12.50
}
