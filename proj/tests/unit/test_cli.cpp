// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#include <gtest/gtest.h>

#include <sstream>

#include "needle/cli.hpp"
#include "support/fixtures.hpp"

using namespace needle;
using fixtures::TempDir;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::size_t line_count(const std::filesystem::path& p) { return util::read_lines(p).size(); }

std::vector<LabeledSnippet> small_corpus() {
  return fixtures::planted_corpus({.n = 400, .positive_rate = 0.2, .seed = 11});
}

void write_paired(const std::vector<LabeledSnippet>& recs, const std::filesystem::path& dir) {
  corpus::write_dataset(recs, dir, Layout::PairedInExpected);
}

}  // namespace

TEST(Cli, NoArgumentsIsUsageError) {
  auto r = run({});
  EXPECT_EQ(r.code, cli::kUsageError);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, UnknownSubcommandIsUsageError) {
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, cli::kUsageError);
}

TEST(Cli, HelpForEverySubcommand) {
  for (const char* sub : {"expand", "collect", "annotate", "split", "export-benchmark", "report", "train", "predict",
                          "eval", "serve"}) {
    auto r = run({sub, "--help"});
    EXPECT_EQ(r.code, cli::kOk) << sub;
    EXPECT_NE(r.out.find(sub), std::string::npos) << sub;
  }
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
}

TEST(Cli, MissingInputFileIsUsageError) {
  TempDir t;
  auto r = run({"eval", "--expected", (t.path() / "nope.tsv").string(), "--out", (t.path() / "nope2.tsv").string()});
  EXPECT_EQ(r.code, cli::kUsageError);
}

TEST(Cli, BadRatiosAreUsageErrors) {
  TempDir t;
  write_paired(small_corpus(), t.path() / "d");
  auto in = (t.path() / "d" / "in.tsv").string(), ex = (t.path() / "d" / "expected.tsv").string();
  for (const char* ratios : {"0.5,0.5,0.5", "0.8,0.2", "a,b,c", "1/0,0,0", "-0.1,0.6,0.5"}) {
    auto r = run({"split", "--ratios", ratios, in, ex, (t.path() / "o").string()});
    EXPECT_EQ(r.code, cli::kUsageError) << ratios;
  }
}

TEST(Cli, MalformedInputIsDomainError) {
  TempDir t;
  util::write_file(t.path() / "expected.tsv", "1\n0\n");
  util::write_file(t.path() / "out.tsv", "1\nmaybe\n");
  auto r = run({"eval", "--expected", (t.path() / "expected.tsv").string(), "--out",
                (t.path() / "out.tsv").string()});
  EXPECT_EQ(r.code, cli::kDomainError);
  EXPECT_NE(r.err.find("error"), std::string::npos);

  util::write_file(t.path() / "short.tsv", "1\n");
  r = run({"eval", "--expected", (t.path() / "expected.tsv").string(), "--out", (t.path() / "short.tsv").string()});
  EXPECT_EQ(r.code, cli::kDomainError);
}

TEST(Cli, EvalIdenticalFiles) {
  TempDir t;
  util::write_file(t.path() / "a.tsv", "1\n0\n1\n0\n");
  auto a = (t.path() / "a.tsv").string();
  auto r = run({"eval", "--expected", a, "--out", a});
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_EQ(r.out, "F1: 1.000000\n");
}

TEST(Cli, EvalPartialMatch) {
  TempDir t;
  util::write_file(t.path() / "e.tsv", "1\n1\n0\n0\n");
  util::write_file(t.path() / "o.tsv", "1\n0\n1\n0\n");
  auto r = run({"eval", "--expected", (t.path() / "e.tsv").string(), "--out", (t.path() / "o.tsv").string()});
  EXPECT_EQ(r.out, "F1: 0.500000\n");
}

TEST(Cli, ExpandToStdoutAndFile) {
  TempDir t;
  util::write_file(t.path() / "lex.tsv", "papierosy\tfajki\nTEMPLATE\t⟨slot⟩ bez akcyzy\n");
  auto lex = (t.path() / "lex.tsv").string();
  auto r = run({"expand", "--lexicon", lex, "Tanie  Papierosy"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(r.out, "Tanie Papierosy\ntanie fajki\nTanie Papierosy bez akcyzy\n");
  auto q = t.path() / "q.txt";
  EXPECT_EQ(run({"expand", "--lexicon", lex, "--out", q.string(), "Tanie  Papierosy"}).code, cli::kOk);
  EXPECT_EQ(util::read_file(q), r.out);
}

TEST(Cli, CollectFromFixture) {
  TempDir t;
  util::write_file(t.path() / "q.txt", "alpha\nbeta\n");
  util::write_file(t.path() / "serp.tsv",
                   "alpha\t0\thttps://a.example/1\tT1\tfirst text\n"
                   "alpha\t0\thttps://a.example/2\tT2\tsecond text\n"
                   "alpha\t1\thttps://a.example/3\t\tthird text\n"
                   "beta\t0\thttps://a.example/1\tT1\tfirst text\n");
  auto out = t.path() / "in.tsv";
  auto r = run({"collect", "--queries", (t.path() / "q.txt").string(), "--engine",
                "fx=fixture:" + (t.path() / "serp.tsv").string(), "--rate", "0", "--out", out.string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  auto snippets = corpus::read_snippets(out);
  ASSERT_EQ(snippets.size(), 3u);
  EXPECT_EQ(snippets[0].url, "https://a.example/1");
  EXPECT_EQ(snippets[0].engine, "fx");
  EXPECT_EQ(snippets[2].url, "https://a.example/3");
  EXPECT_NE(r.err.find("fetched=4"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("kept=3"), std::string::npos) << r.err;
}

TEST(Cli, CollectAllEnginesUnreachableWarns) {
  TempDir t;
  util::write_file(t.path() / "q.txt", "alpha\n");
  auto r = run({"collect", "--queries", (t.path() / "q.txt").string(), "--engine", "x=http://127.0.0.1:1/search",
                "--rate", "0", "--pages", "1", "--out", (t.path() / "in.tsv").string()});
  EXPECT_EQ(r.code, cli::kOk);
  EXPECT_TRUE(corpus::read_snippets(t.path() / "in.tsv").empty());
  EXPECT_NE(r.err.find("warning"), std::string::npos) << r.err;
}

TEST(Cli, CollectBadEngineSpecIsUsageError) {
  TempDir t;
  util::write_file(t.path() / "q.txt", "alpha\n");
  auto r = run({"collect", "--queries", (t.path() / "q.txt").string(), "--engine", "noequals", "--out",
                (t.path() / "in.tsv").string()});
  EXPECT_EQ(r.code, cli::kUsageError);
}

TEST(Cli, AnnotateWorkflow) {
  TempDir t;
  std::vector<Snippet> snippets;
  for (int i = 0; i < 6; ++i) snippets.push_back(fixtures::make_snippet(fixtures::numbered("s", i), "text"));
  corpus::write_snippets(snippets, t.path() / "in.tsv");
  auto in = (t.path() / "in.tsv").string();

  auto r = run({"annotate", "assign", "--in", in, "--annotators", "ann1,ann2,ann3", "--seed", "5", "--out",
                (t.path() / "tasks.tsv").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  auto tasks = util::read_lines(t.path() / "tasks.tsv");
  ASSERT_EQ(tasks.size(), 6u);
  for (const auto& line : tasks) {
    auto f = util::split(line, '\t');
    ASSERT_EQ(f.size(), 3u);
    EXPECT_NE(f[1], f[2]);
  }
  EXPECT_EQ(run({"annotate", "assign", "--in", in, "--annotators", "solo", "--out",
                 (t.path() / "x.tsv").string()})
                .code,
            cli::kDomainError);

  // s0..s3 agree, s4 and s5 disagree.
  std::string journal;
  const char* a[] = {"interesting", "not_interesting", "interesting", "not_interesting", "interesting",
                     "not_interesting"};
  const char* b[] = {"interesting", "not_interesting", "interesting", "not_interesting", "not_interesting",
                     "interesting"};
  for (int i = 0; i < 6; ++i) {
    auto id = fixtures::numbered("s", i);
    journal += id + "\tann1\t" + a[i] + "\tsnippet\t2026-03-01T10:00:00Z\n";
    journal += id + "\tann2\t" + b[i] + "\tsnippet\t2026-03-01T10:00:01Z\n";
  }
  util::write_file(t.path() / "journal.tsv", journal);
  auto jp = (t.path() / "journal.tsv").string();
  r = run({"annotate", "adjudicate", "--journal", jp, "--in", in, "--out", (t.path() / "expected.tsv").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(util::read_file(t.path() / "expected.tsv"), "1\n0\n1\n0\n1\n1\n");

  r = run({"annotate", "agreement", "--journal", jp});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  // 4 of 6 agree; both annotators say "interesting" half the time, so p_e = 1/2.
  EXPECT_NE(r.out.find("items\t6\n"), std::string::npos) << r.out;
  auto kappa_line = r.out.substr(r.out.find("kappa\t") + 6);
  EXPECT_NEAR(std::stod(kappa_line), (4.0 / 6 - 0.5) / 0.5, 1e-12);
}

TEST(Cli, SplitPublishedSizesFromQuotients) {
  TempDir t;
  write_paired(fixtures::theme_corpus(3), t.path() / "all");
  auto r = run({"split", "--ratios", "92028/114432,10570/114432,11834/114432", "--seed", "2026",
                (t.path() / "all" / "in.tsv").string(), (t.path() / "all" / "expected.tsv").string(),
                (t.path() / "out").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(r.out, "train\t92028\ndev-0\t10570\ntest-A\t11834\n");
  EXPECT_EQ(line_count(t.path() / "out" / "train" / "in.tsv"), 92028u);
  EXPECT_EQ(line_count(t.path() / "out" / "train" / "expected.tsv"), 92028u);
  EXPECT_EQ(line_count(t.path() / "out" / "dev-0" / "in.tsv"), 10570u);
  EXPECT_EQ(line_count(t.path() / "out" / "test-A" / "in.tsv"), 11834u);
  EXPECT_EQ(line_count(t.path() / "out" / "test-A" / "expected.tsv"), 11834u);
}

TEST(Cli, ExportBenchmarkLayout) {
  TempDir t;
  write_paired(small_corpus(), t.path() / "all");
  auto in = (t.path() / "all" / "in.tsv").string(), ex = (t.path() / "all" / "expected.tsv").string();
  auto r = run({"export-benchmark", in, ex, (t.path() / "bench").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  auto b = t.path() / "bench";
  for (const char* d : {"train", "dev-0"}) {
    EXPECT_TRUE(std::filesystem::exists(b / d / "in.tsv")) << d;
    EXPECT_TRUE(std::filesystem::exists(b / d / "expected.tsv")) << d;
  }
  EXPECT_TRUE(std::filesystem::exists(b / "test-A" / "in.tsv"));
  EXPECT_FALSE(std::filesystem::exists(b / "test-A" / "expected.tsv"));
  EXPECT_TRUE(std::filesystem::exists(b / "config.txt"));
  EXPECT_EQ(line_count(b / "train" / "in.tsv") + line_count(b / "dev-0" / "in.tsv") +
                line_count(b / "test-A" / "in.tsv"),
            400u);

  r = run({"export-benchmark", "--include-test-expected", in, ex, (t.path() / "bench2").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(t.path() / "bench2" / "test-A" / "expected.tsv"));
}

TEST(Cli, ReportCountsThemesAndLabels) {
  TempDir t;
  std::vector<LabeledSnippet> recs;
  for (int i = 0; i < 4; ++i) {
    recs.push_back({fixtures::make_snippet(fixtures::numbered("r", i), "x", i < 3 ? Theme::Drugs : Theme::Documents),
                    i == 0 ? Label::Interesting : Label::NotInteresting});
  }
  write_paired(recs, t.path() / "d");
  auto r = run({"report", (t.path() / "d").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_NE(r.out.find("Drugs\t3\t75.00%"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Documents\t1\t25.00%"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Interesting\t1\t25.00%"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("total\t4"), std::string::npos) << r.out;
}

TEST(Cli, TrainIsDeterministicAndPredictWritesTriage) {
  TempDir t;
  auto recs = small_corpus();
  auto split = corpus::stratified_split(recs, {0.8, 0.1, 0.1}, 4);
  write_paired(split.train, t.path() / "train");
  write_paired(split.validation, t.path() / "dev");
  auto train_once = [&](const std::string& tag) {
    auto r = run({"train", "--train", (t.path() / "train").string(), "--valid", (t.path() / "dev").string(),
                  "--model", (t.path() / ("model" + tag)).string(), "--vocab", (t.path() / ("vocab" + tag)).string(),
                  "--seed", "9", "--log", (t.path() / ("log" + tag)).string()});
    EXPECT_EQ(r.code, cli::kOk) << r.err;
    return r;
  };
  auto r1 = train_once("1");
  auto r2 = train_once("2");
  EXPECT_EQ(r1.out, r2.out);
  EXPECT_EQ(util::read_file(t.path() / "model1"), util::read_file(t.path() / "model2"));
  EXPECT_EQ(util::read_file(t.path() / "vocab1"), util::read_file(t.path() / "vocab2"));
  EXPECT_EQ(util::read_file(t.path() / "log1"), util::read_file(t.path() / "log2"));

  auto r = run({"predict", "--model", (t.path() / "model1").string(), "--vocab", (t.path() / "vocab1").string(),
                "--in", (t.path() / "dev" / "in.tsv").string(), "--out", (t.path() / "out.tsv").string(), "--triage",
                (t.path() / "triage.tsv").string()});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(line_count(t.path() / "out.tsv"), split.validation.size());
  auto triage = util::read_lines(t.path() / "triage.tsv");
  ASSERT_EQ(triage.size(), split.validation.size());
  auto rank = [](std::string_view v) { return v == "red" ? 2 : v == "yellow" ? 1 : 0; };
  for (std::size_t i = 0; i < triage.size(); ++i) {
    auto f = util::split(triage[i], '\t');
    ASSERT_EQ(f.size(), 4u);
    double p = util::parse_double(f[1]);
    EXPECT_EQ(f[2], p >= 0.7 ? "red" : p >= 0.3 ? "yellow" : "green");
    if (i > 0) {
      auto g = util::split(triage[i - 1], '\t');
      EXPECT_GE(rank(g[2]), rank(f[2]));
      if (g[2] == f[2]) EXPECT_GE(util::parse_double(g[1]), p);
    }
  }
  r = run({"eval", "--expected", (t.path() / "dev" / "expected.tsv").string(), "--out",
           (t.path() / "out.tsv").string()});
  ASSERT_EQ(r.code, cli::kOk);
  auto expected = util::read_lines(t.path() / "dev" / "expected.tsv");
  auto predicted = util::read_lines(t.path() / "out.tsv");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    tp += expected[i] == "1" && predicted[i] == "1";
    fp += expected[i] == "0" && predicted[i] == "1";
    fn += expected[i] == "1" && predicted[i] == "0";
  }
  char want[32];
  std::snprintf(want, sizeof want, "F1: %.6f\n", tp == 0 ? 0.0 : 2 * tp / (2 * tp + fp + fn));
  EXPECT_EQ(r.out, want);
}

TEST(Cli, TrainRejectsUnknownConfigKey) {
  TempDir t;
  write_paired(small_corpus(), t.path() / "d");
  util::write_file(t.path() / "c.toml", "[training]\nmax_epoch = 3\n");
  auto r = run({"train", "--train", (t.path() / "d").string(), "--valid", (t.path() / "d").string(), "--model",
                (t.path() / "m").string(), "--vocab", (t.path() / "v").string(), "--config",
                (t.path() / "c.toml").string()});
  EXPECT_NE(r.code, cli::kOk);
  EXPECT_FALSE(std::filesystem::exists(t.path() / "m"));
}

TEST(Cli, ServeRejectsMalformedBind) {
  TempDir t;
  util::write_file(t.path() / "s.toml", "model = \"m\"\n");
  auto r = run({"serve", "--config", (t.path() / "s.toml").string(), "--bind", "localhost"});
  EXPECT_EQ(r.code, cli::kUsageError);
}

TEST(Cli, SampleFilesParse) {
  const std::filesystem::path samples = std::filesystem::path(NEEDLE_SOURCE_DIR) / "samples";
  EXPECT_NO_THROW(collector::load_lexicon(samples / "lexicon.tsv"));
  EXPECT_NO_THROW(FixtureConnector::load(samples / "serp.tsv"));
  EXPECT_NO_THROW(train_settings_from(Config::load(samples / "train.toml")));
  EXPECT_NO_THROW(ServiceConfig::from(Config::load(samples / "service.toml"), samples));
}
