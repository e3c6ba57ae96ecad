// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#pragma once

#include <CLI11.hpp>

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <iostream>
#include <ostream>
#include <string>
#include <vector>

#include "needle/annotation.hpp"
#include "needle/collector.hpp"
#include "needle/config.hpp"
#include "needle/corpus.hpp"
#include "needle/features.hpp"
#include "needle/metrics.hpp"
#include "needle/service.hpp"
#include "needle/trainer.hpp"
#include "needle/triage.hpp"

namespace needle::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kDomainError = 1;
inline constexpr int kUsageError = 2;

namespace detail {

// Three comma-separated fractions, each a decimal ("0.8") or a quotient
// ("92028/114432"). A sum off from 1 by no more than 1e-6 is renormalized.
inline std::array<double, 3> parse_ratios(const std::string& text) {
  auto parts = util::split(text, ',');
  if (parts.size() != 3) throw CLI::ValidationError("--ratios", "expected three comma-separated fractions");
  std::array<double, 3> r{};
  for (std::size_t i = 0; i < 3; ++i) {
    auto p = util::trim(parts[i]);
    auto slash = p.find('/');
    try {
      if (slash == std::string_view::npos) {
        r[i] = util::parse_double(p);
      } else {
        double den = util::parse_double(util::trim(p.substr(slash + 1)));
        if (den <= 0) throw CLI::ValidationError("--ratios", "denominator must be positive");
        r[i] = util::parse_double(util::trim(p.substr(0, slash))) / den;
      }
    } catch (const FormatError&) {
      throw CLI::ValidationError("--ratios", "cannot parse '" + std::string(p) + "'");
    }
    if (!(r[i] >= 0)) throw CLI::ValidationError("--ratios", "ratios must be non-negative");
  }
  double sum = r[0] + r[1] + r[2];
  if (std::abs(sum - 1.0) > 1e-6) throw CLI::ValidationError("--ratios", "ratios must sum to 1");
  for (auto& x : r) x /= sum;
  return r;
}

inline std::vector<std::string> read_query_file(const std::filesystem::path& p) {
  std::vector<std::string> out;
  for (auto& line : util::read_lines(p)) {
    auto q = util::collapse_whitespace(line);
    if (!q.empty()) out.push_back(std::move(q));
  }
  return out;
}

inline void write_gonito(const DatasetSplit& split, const std::filesystem::path& out, bool test_expected) {
  corpus::write_dataset(split.train, out / "train", Layout::PairedInExpected);
  corpus::write_dataset(split.validation, out / "dev-0", Layout::PairedInExpected);
  corpus::write_dataset(split.test, out / "test-A", Layout::PairedInExpected);
  if (!test_expected) std::filesystem::remove(out / "test-A" / "expected.tsv");
}

inline std::string render_triage(const std::vector<TriageResult>& ranked) {
  std::string out;
  for (const auto& r : ranked)
    out += r.snippet.id + '\t' + util::format_double(r.p) + '\t' + std::string(to_string(r.verdict)) + '\t' +
           r.snippet.url + '\n';
  return out;
}

inline std::string render_log(const TrainingLog& log) {
  std::string out = "step\tf1\tloss\tlr\n";
  for (const auto& v : log.validations)
    out += std::to_string(v.step) + '\t' + util::format_double(v.f1) + '\t' + util::format_double(v.loss) + '\t' +
           util::format_double(v.lr) + '\n';
  out += "# best_step=" + std::to_string(log.best_step) + " best_f1=" + util::format_double(log.best_f1) +
         " stop=" + (log.stop_reason == StopReason::EarlyStopped ? "early_stopped" : "max_epochs") +
         " total_steps=" + std::to_string(log.total_steps) + "\n";
  return out;
}

inline std::atomic<HttpServer*> g_server{nullptr};

}  // namespace detail

// Entry point for the needle tool. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  using namespace detail;
  CLI::App app{"needle: web snippet triage toolkit (collection, annotation, training, evaluation, serving)",
               "needle"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 domain error, 2 usage error.");

  std::function<void()> action;

  // expand
  auto* expand = app.add_subcommand("expand", "Expand an inquiry into related queries");
  std::string lexicon_path, inquiry, expand_out;
  expand->add_option("--lexicon", lexicon_path, "Lexicon file")->required()->check(CLI::ExistingFile);
  expand->add_option("--out", expand_out, "Write queries here instead of stdout");
  expand->add_option("inquiry", inquiry, "Inquiry text")->required();
  expand->callback([&] {
    action = [&] {
      auto queries = collector::expand_query(inquiry, collector::load_lexicon(lexicon_path));
      std::string text;
      for (const auto& q : queries) text += q + '\n';
      if (expand_out.empty())
        out << text;
      else
        util::write_file(expand_out, text);
    };
  });

  // collect
  auto* collect = app.add_subcommand("collect", "Collect snippets for queries from search engines");
  std::string queries_path, collect_out;
  std::vector<std::string> engine_specs;
  std::size_t pages = 10;
  double rate = 1.0;
  collect->add_option("--queries", queries_path, "Query file, one per line")->required()->check(CLI::ExistingFile);
  collect->add_option("--engine", engine_specs, "name=fixture:<path> or name=http://<url> (repeatable)")->required();
  collect->add_option("--pages", pages, "Result pages per query")->check(CLI::PositiveNumber);
  collect->add_option("--rate", rate, "Requests per second per engine (0 = unlimited)");
  collect->add_option("--out", collect_out, "Output in.tsv")->required();
  collect->callback([&] {
    action = [&] {
      std::vector<SearchEngineSpec> engines;
      for (const auto& spec : engine_specs) {
        auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0) throw CLI::ValidationError("--engine", "expected name=connector");
        engines.push_back({spec.substr(0, eq), pages, rate, make_connector(spec.substr(eq + 1))});
      }
      auto res = collector::collect(read_query_file(queries_path), engines, pages);
      corpus::write_snippets(res.snippets, collect_out);
      for (const auto& [name, st] : res.job.stats)
        err << name << ": pages=" << st.pages_requested << " failed=" << st.failed_fetches
            << " fetched=" << st.fetched << " invalid=" << st.invalid << " kept=" << st.deduped << "\n";
      if (res.job.status == CollectionStatus::AllEnginesUnreachable) err << "warning: all engines unreachable\n";
    };
  });

  // annotate
  auto* annotate = app.add_subcommand("annotate", "Annotation workflow");
  annotate->require_subcommand(1);
  auto* assign = annotate->add_subcommand("assign", "Assign two annotators to every snippet");
  std::string ann_in, ann_out, annotators_csv, journal_path;
  std::uint64_t seed = 0;
  assign->add_option("--in", ann_in, "in.tsv")->required()->check(CLI::ExistingFile);
  assign->add_option("--annotators", annotators_csv, "Comma-separated annotator ids")->required();
  assign->add_option("--seed", seed, "Random seed");
  assign->add_option("--out", ann_out, "Task file: snippet_id<TAB>annotator<TAB>annotator")->required();
  assign->callback([&] {
    action = [&] {
      std::vector<std::string> ids;
      for (auto a : util::split(annotators_csv, ',')) ids.emplace_back(util::trim(a));
      auto snippets = corpus::read_snippets(ann_in);
      auto tasks = annotation::assign(std::span<const Snippet>(snippets), ids, seed);
      std::string text;
      for (const auto& t : tasks) text += t.snippet_id + '\t' + t.annotators[0] + '\t' + t.annotators[1] + '\n';
      util::write_file(ann_out, text);
    };
  });
  auto* adjudicate = annotate->add_subcommand("adjudicate", "Combine two annotations per snippet (OR rule)");
  adjudicate->add_option("--journal", journal_path, "Annotation journal")->required()->check(CLI::ExistingFile);
  adjudicate->add_option("--in", ann_in, "in.tsv the labels align with")->required()->check(CLI::ExistingFile);
  adjudicate->add_option("--out", ann_out, "Output expected.tsv")->required();
  adjudicate->callback([&] {
    action = [&] {
      auto labels = annotation::adjudicate_all(annotation::read_journal(journal_path));
      auto snippets = corpus::read_snippets(ann_in);
      std::vector<Label> aligned;
      for (const auto& s : snippets) {
        auto it = labels.find(s.id);
        if (it == labels.end()) throw Error("snippet " + s.id + " has no adjudicated label");
        aligned.push_back(it->second);
      }
      corpus::write_labels(aligned, ann_out);
    };
  });
  auto* agree = annotate->add_subcommand("agreement", "Observed agreement and Cohen's kappa");
  agree->add_option("--journal", journal_path, "Annotation journal")->required()->check(CLI::ExistingFile);
  agree->callback([&] {
    action = [&] {
      auto rep = annotation::agreement(annotation::read_journal(journal_path));
      out << "items\t" << rep.items << "\nobserved\t" << util::format_double(rep.observed) << "\nkappa\t"
          << (rep.kappa ? util::format_double(*rep.kappa) : std::string("undefined")) << "\n";
    };
  });

  // split
  auto* split = app.add_subcommand("split", "Stratified train/dev/test split into train/, dev-0/, test-A/");
  std::string ratios_text = "0.8,0.1,0.1", split_in, split_expected, split_out;
  split->add_option("--ratios", ratios_text, "Three fractions summing to 1");
  split->add_option("--seed", seed, "Random seed");
  split->add_option("in", split_in, "in.tsv")->required()->check(CLI::ExistingFile);
  split->add_option("expected", split_expected, "expected.tsv")->required()->check(CLI::ExistingFile);
  split->add_option("outdir", split_out, "Output directory")->required();
  auto read_pair = [](const std::string& in, const std::string& expected) {
    auto snippets = corpus::read_snippets(in);
    auto labels = corpus::read_labels(expected);
    if (snippets.size() != labels.size())
      throw FormatError("in.tsv has " + std::to_string(snippets.size()) + " lines but expected.tsv has " +
                        std::to_string(labels.size()));
    std::vector<LabeledSnippet> records;
    records.reserve(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) records.push_back({std::move(snippets[i]), labels[i]});
    return records;
  };
  split->callback([&] {
    action = [&] {
      auto s = corpus::stratified_split(read_pair(split_in, split_expected), parse_ratios(ratios_text), seed);
      write_gonito(s, split_out, true);
      out << "train\t" << s.train.size() << "\ndev-0\t" << s.validation.size() << "\ntest-A\t" << s.test.size()
          << "\n";
    };
  });

  // export-benchmark
  auto* exportb = app.add_subcommand("export-benchmark", "Write a challenge directory (train/, dev-0/, test-A/)");
  bool with_test_expected = false;
  exportb->add_option("--ratios", ratios_text, "Three fractions summing to 1");
  exportb->add_option("--seed", seed, "Random seed");
  exportb->add_flag("--include-test-expected", with_test_expected, "Also write test-A/expected.tsv");
  exportb->add_option("in", split_in, "in.tsv")->required()->check(CLI::ExistingFile);
  exportb->add_option("expected", split_expected, "expected.tsv")->required()->check(CLI::ExistingFile);
  exportb->add_option("outdir", split_out, "Output directory")->required();
  exportb->callback([&] {
    action = [&] {
      auto s = corpus::stratified_split(read_pair(split_in, split_expected), parse_ratios(ratios_text), seed);
      write_gonito(s, split_out, with_test_expected);
      util::write_file(std::filesystem::path(split_out) / "config.txt", "--metric F1\n--precision 6\n");
      out << "train\t" << s.train.size() << "\ndev-0\t" << s.validation.size() << "\ntest-A\t" << s.test.size()
          << "\n";
    };
  });

  // report
  auto* report = app.add_subcommand("report", "Theme and label distribution of a labeled dataset");
  std::string data_dir;
  report->add_option("data", data_dir, "Directory with in.tsv and expected.tsv")->required()->check(CLI::ExistingDirectory);
  report->callback([&] {
    action = [&] {
      out << corpus::render(corpus::distribution_report(corpus::read_dataset(data_dir, Layout::PairedInExpected)));
    };
  });

  // train
  auto* train = app.add_subcommand("train", "Train the classifier");
  std::string train_dir, valid_dir, model_path, vocab_path, config_path, log_path;
  std::optional<std::uint64_t> seed_override;
  train->add_option("--train", train_dir, "Training directory (in.tsv + expected.tsv)")->required()->check(CLI::ExistingDirectory);
  train->add_option("--valid", valid_dir, "Validation directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--model", model_path, "Output model file")->required();
  train->add_option("--vocab", vocab_path, "Output vocabulary file")->required();
  train->add_option("--config", config_path, "Training config (TOML)")->check(CLI::ExistingFile);
  train->add_option("--seed", seed_override, "Random seed (overrides config)");
  train->add_option("--log", log_path, "Write the validation log here");
  train->callback([&] {
    action = [&] {
      TrainSettings settings;
      if (!config_path.empty()) {
        auto c = Config::load(config_path);
        c.require_known(train_setting_keys());
        settings = train_settings_from(c);
      }
      if (seed_override) settings.training.seed = *seed_override;
      auto tr = corpus::read_dataset(train_dir, Layout::PairedInExpected);
      auto va = corpus::read_dataset(valid_dir, Layout::PairedInExpected);
      auto trained =
          trainer::train_classifier(tr, va, settings.features, settings.training, settings.optimizer);
      trained.vocab.save(vocab_path);
      util::write_file(model_path, trained.model.serialize());
      if (!log_path.empty()) util::write_file(log_path, render_log(trained.log));
      if (trained.log.degenerate_validation) err << "warning: validation set has no positive examples\n";
      out << "vocabulary\t" << trained.vocab.size() << "\nbest_step\t" << trained.log.best_step << "\nbest_f1\t"
          << metrics::format_f1(trained.log.best_f1) << "\nmodel_version\t" << trained.model.version() << "\n";
    };
  });

  // predict
  auto* predict = app.add_subcommand("predict", "Score in.tsv with a trained model");
  std::string pred_in, pred_out, triage_out;
  double threshold = 0.5;
  Thresholds th;
  predict->add_option("--model", model_path, "Model file")->required()->check(CLI::ExistingFile);
  predict->add_option("--vocab", vocab_path, "Vocabulary file")->required()->check(CLI::ExistingFile);
  predict->add_option("--in", pred_in, "in.tsv")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pred_out, "Output out.tsv (0/1 per line)")->required();
  predict->add_option("--threshold", threshold, "Decision threshold for out.tsv")->check(CLI::Range(0.0, 1.0));
  predict->add_option("--triage", triage_out, "Also write the ranked triage list (id, p, verdict, url)");
  predict->add_option("--red", th.red, "Red threshold")->check(CLI::Range(0.0, 1.0));
  predict->add_option("--yellow", th.yellow, "Yellow threshold")->check(CLI::Range(0.0, 1.0));
  predict->callback([&] {
    action = [&] {
      th.validate();
      auto model = load_classifier(model_path, vocab_path);
      auto snippets = corpus::read_snippets(pred_in);
      std::vector<Label> labels;
      labels.reserve(snippets.size());
      for (const auto& s : snippets)
        labels.push_back(model->proba(s) >= threshold ? Label::Interesting : Label::NotInteresting);
      corpus::write_labels(labels, pred_out);
      if (!triage_out.empty()) util::write_file(triage_out, render_triage(classify_and_rank(snippets, *model, th)));
    };
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Score out.tsv against expected.tsv (F1 in [0,1])");
  std::string eval_expected, eval_out;
  bool full_report = false;
  eval->add_option("--expected", eval_expected, "expected.tsv")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "out.tsv")->required()->check(CLI::ExistingFile);
  eval->add_flag("--report", full_report, "Also print accuracy, precision and recall");
  eval->callback([&] {
    action = [&] {
      double f1 = metrics::geval_evaluate(eval_expected, eval_out);
      out << "F1: " << metrics::format_f1(f1) << "\n";
      if (full_report) {
        auto cm = metrics::confusion(corpus::read_labels(eval_out), corpus::read_labels(eval_expected));
        out << metrics::render(metrics::compute(cm));
      }
    };
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  std::string bind_override;
  serve->add_option("--config", config_path, "Service config (TOML)")->required()->check(CLI::ExistingFile);
  serve->add_option("--bind", bind_override, "host:port (overrides config and NEEDLE_BIND)");
  serve->callback([&] {
    action = [&] {
      auto c = Config::load(config_path);
      auto cfg = ServiceConfig::from(c, std::filesystem::path(config_path).parent_path());
      if (!bind_override.empty()) {
        auto colon = bind_override.rfind(':');
        if (colon == std::string::npos) throw CLI::ValidationError("--bind", "expected host:port");
        cfg.bind_host = bind_override.substr(0, colon);
        cfg.bind_port = static_cast<int>(util::parse_int(bind_override.substr(colon + 1)));
      }
      Service svc(Service::options_from(cfg));
      HttpServer http(svc, cfg.timeout_seconds);
      detail::g_server = &http;
      std::signal(SIGINT, [](int) {
        if (auto* s = detail::g_server.load()) s->stop();
      });
      std::signal(SIGTERM, [](int) {
        if (auto* s = detail::g_server.load()) s->stop();
      });
      err << "serving on " << cfg.bind_host << ":" << cfg.bind_port << " (model " << svc.current_model()->version
          << ")\n";
      http.run(cfg.bind_host, cfg.bind_port);
      detail::g_server = nullptr;
    };
  });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    app.exit(e, out, err);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsageError;
  }

  try {
    if (action) action();
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kDomainError;
  }
  return kOk;
}

}  // namespace needle::cli
