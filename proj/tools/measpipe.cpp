// Copyright 2026 The MeasPipe Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "measpipe/config.hpp"
#include "measpipe/corpus.hpp"
#include "measpipe/encoder.hpp"
#include "measpipe/metrics.hpp"
#include "measpipe/modcls.hpp"
#include "measpipe/pipeline.hpp"
#include "measpipe/tagheads.hpp"
#include "measpipe/textprep.hpp"
#include "measpipe/tokenizers.hpp"
#include "measpipe/traindata.hpp"
#include "measpipe/unitdet.hpp"

namespace fs = std::filesystem;
using namespace measpipe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitData = 1;   // data or validation failure
constexpr int kExitUsage = 2;  // bad invocation

struct CommonOpts {
  std::string config_file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_config_options(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_file,
                  "Config file, one 'key = value' per line ('#' comments)");
  for (const std::string& key : config::RunConfig::keys()) {
    cmd->add_option_function<std::string>(
        "--" + key,
        [&opts, key](const std::string& value) {
          opts.overrides.emplace_back(key, value);
        },
        "Set config key " + key);
  }
}

// Resolves layered configuration and runs static validation. Returns
// nullopt (after printing the problems) when the run cannot proceed.
std::optional<config::RunConfig> resolve_checked(const CommonOpts& opts) {
  config::RunConfig cfg = config::resolve_config(
      opts.config_file.empty() ? std::nullopt
                               : std::optional<std::string>(opts.config_file),
      opts.overrides);
  const std::vector<std::string> problems = cfg.validate();
  if (!problems.empty()) {
    for (const std::string& p : problems) {
      std::cerr << "config error: " << p << "\n";
    }
    return std::nullopt;
  }
  return cfg;
}

std::shared_ptr<textprep::SubwordTokenizer> build_tokenizer(
    const config::RunConfig& cfg, const Corpus& corpus) {
  if (cfg.tokenizer == "wordpiece") {
    return std::make_shared<textprep::WordPieceTokenizer>(
        textprep::WordPieceTokenizer::from_file(cfg.vocab, cfg.lowercase));
  }
  std::vector<std::string> texts;
  texts.reserve(corpus.documents.size() + 1);
  for (const auto& [doc_id, document] : corpus.documents) {
    texts.push_back(document.text);
  }
  // The marker symbols must be real vocabulary entries, not [UNK]: the
  // marker-conditioned models tell spans apart by seeing them.
  texts.push_back("$ #");
  return std::make_shared<textprep::WhitespaceTokenizer>(
      textprep::WhitespaceTokenizer::from_texts(texts, cfg.lowercase));
}

void save_tokenizer(const textprep::SubwordTokenizer& tokenizer,
                    const fs::path& dir) {
  nlohmann::json meta;
  std::vector<std::string> lines;
  if (const auto* wp =
          dynamic_cast<const textprep::WordPieceTokenizer*>(&tokenizer)) {
    meta = {{"type", "wordpiece"}, {"lowercase", wp->lowercase()}};
    lines = wp->vocab();
  } else if (const auto* ws =
                 dynamic_cast<const textprep::WhitespaceTokenizer*>(
                     &tokenizer)) {
    meta = {{"type", "whitespace"}, {"lowercase", ws->lowercase()}};
    lines = ws->words();
  } else {
    throw std::runtime_error("tokenizer type cannot be serialized");
  }
  std::ofstream meta_out(dir / "tokenizer.json");
  meta_out << meta.dump(2) << "\n";
  std::ofstream vocab_out(dir / "vocab.txt");
  for (const std::string& line : lines) vocab_out << line << "\n";
}

std::shared_ptr<textprep::SubwordTokenizer> load_tokenizer(
    const fs::path& dir) {
  std::ifstream meta_in(dir / "tokenizer.json");
  if (!meta_in) {
    throw std::runtime_error("no tokenizer.json under '" + dir.string() + "'");
  }
  nlohmann::json meta;
  meta_in >> meta;
  const std::string vocab_path = (dir / "vocab.txt").string();
  if (meta.at("type") == "wordpiece") {
    return std::make_shared<textprep::WordPieceTokenizer>(
        textprep::WordPieceTokenizer::from_file(
            vocab_path, meta.at("lowercase").get<bool>()));
  }
  std::ifstream in(vocab_path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return std::make_shared<textprep::WhitespaceTokenizer>(
      std::move(words), meta.at("lowercase").get<bool>());
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

int report_violations(const std::vector<Violation>& violations) {
  for (const Violation& v : violations) {
    std::cerr << "validation: " << v.doc_id << " " << v.annot_id << ": "
              << v.rule << "\n";
  }
  return kExitData;
}

// ---------------------------------------------------------------- preprocess

int run_preprocess(const CommonOpts& opts) {
  const std::optional<config::RunConfig> cfg = resolve_checked(opts);
  if (!cfg) return kExitData;
  if (cfg->text_dir.empty() || cfg->tsv_dir.empty()) {
    std::cerr << "preprocess needs --text_dir and --tsv_dir\n";
    return kExitUsage;
  }

  Corpus corpus = load_corpus(cfg->text_dir, cfg->tsv_dir);
  if (corpus.documents.empty()) {
    std::cerr << "no documents under '" << cfg->text_dir << "'\n";
    return kExitData;
  }
  const std::vector<Violation> violations = validate_corpus(corpus);
  if (!violations.empty()) return report_violations(violations);

  auto [train, dev] = split_train_dev(corpus, cfg->split_ratio, cfg->seed);
  const auto tokenizer = build_tokenizer(*cfg, corpus);
  const textprep::RuleSentenceSplitter splitter;
  const traindata::BuildOptions build{cfg->max_len};

  const traindata::Dataset train_ds =
      traindata::build_dataset(train, splitter, *tokenizer, build);
  const traindata::Dataset dev_ds =
      traindata::build_dataset(dev, splitter, *tokenizer, build);

  const fs::path run_dir = config::create_run_dir(*cfg, "preprocess");

  using tagheads::TaggerVariant;
  const std::pair<const char*, TaggerVariant> variants[] = {
      {"quantity", TaggerVariant::kQuantity},
      {"entity", TaggerVariant::kMeasuredEntity},
      {"property", TaggerVariant::kMeasuredProperty},
      {"qualifier_q", TaggerVariant::kQualifierQuantity},
      {"qualifier_p", TaggerVariant::kQualifierProperty},
  };
  for (const auto& [name, variant] : variants) {
    traindata::write_tag_cache(
        train_ds.tagging(variant),
        (run_dir / (std::string(name) + ".train.cache")).string());
    traindata::write_tag_cache(
        dev_ds.tagging(variant),
        (run_dir / (std::string(name) + ".dev.cache")).string());
  }
  traindata::write_unit_cache(train_ds.unit,
                              (run_dir / "unit.train.cache").string());
  traindata::write_unit_cache(dev_ds.unit,
                              (run_dir / "unit.dev.cache").string());
  traindata::write_modifier_cache(train_ds.modifier,
                                  (run_dir / "modifier.train.cache").string());
  traindata::write_modifier_cache(dev_ds.modifier,
                                  (run_dir / "modifier.dev.cache").string());

  traindata::DatasetStats stats = train_ds.stats;
  stats += dev_ds.stats;
  write_text(run_dir / "stats.txt", stats.to_keyvalue());

  {
    std::ostringstream split_lines;
    for (const auto& [doc_id, document] : train.documents) {
      split_lines << "train\t" << doc_id << "\n";
    }
    for (const auto& [doc_id, document] : dev.documents) {
      split_lines << "dev\t" << doc_id << "\n";
    }
    write_text(run_dir / "split.txt", split_lines.str());
  }
  {
    std::ostringstream lines;
    lines << "doc_id\tindex\tstart\tend\n";
    for (const auto& [doc_id, document] : corpus.documents) {
      for (const textprep::Sentence& s :
           textprep::split_sentences(document, splitter)) {
        lines << doc_id << "\t" << s.index << "\t" << s.span.start << "\t"
              << s.span.end << "\n";
      }
    }
    write_text(run_dir / "sentences.tsv", lines.str());
  }
  save_tokenizer(*tokenizer, run_dir);

  std::cout << stats.to_keyvalue();
  std::cout << "train_documents = " << train.num_documents() << "\n";
  std::cout << "dev_documents = " << dev.num_documents() << "\n";
  std::cout << "cache_dir = " << run_dir.string() << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- train

// Appends bundle.json + vocab.txt so the accumulated directory becomes a
// loadable bundle once all seven models have been trained into it.
void seed_bundle_dir(const fs::path& bundle_dir, const fs::path& cache_dir,
                     const config::RunConfig& cfg) {
  fs::create_directories(bundle_dir);
  if (!fs::exists(bundle_dir / "vocab.txt")) {
    fs::copy_file(cache_dir / "vocab.txt", bundle_dir / "vocab.txt");
  }
  if (!fs::exists(bundle_dir / "bundle.json")) {
    std::ifstream tok_in(cache_dir / "tokenizer.json");
    nlohmann::json tok;
    tok_in >> tok;
    nlohmann::json meta;
    meta["max_len"] = cfg.max_len;
    meta["unit_max_len"] = cfg.unit_max_len;
    meta["splitter"] = "rule";
    meta["tokenizer"] = tok;
    write_text(bundle_dir / "bundle.json", meta.dump(2) + "\n");
  }
}

void write_curve(const fs::path& path, const std::vector<double>& loss,
                 const std::vector<double>& dev) {
  std::ostringstream out;
  out << "epoch,train_loss,dev_f1\n";
  for (std::size_t e = 0; e < loss.size(); ++e) {
    out << e << "," << loss[e] << ","
        << (e < dev.size() ? dev[e] : 0.0) << "\n";
  }
  write_text(path, out.str());
}

int check_finite(const std::vector<double>& losses) {
  for (double l : losses) {
    if (!std::isfinite(l)) {
      std::cerr << "training aborted: non-finite loss\n";
      return kExitData;
    }
  }
  return kExitOk;
}

int run_train(const CommonOpts& opts, const std::string& subtask,
              const std::string& cache, const std::string& bundle) {
  const std::optional<config::RunConfig> cfg = resolve_checked(opts);
  if (!cfg) return kExitData;
  const fs::path cache_dir = cache;

  const auto tokenizer = load_tokenizer(cache_dir);
  const fs::path run_dir = config::create_run_dir(*cfg, "train-" + subtask);
  const fs::path model_dir = run_dir / "model";
  const auto log = [](int epoch, double loss, double dev_f1) {
    std::cout << "epoch " << epoch << "  loss " << loss << "  dev_f1 "
              << dev_f1 << "\n";
  };

  std::vector<double> losses;
  if (subtask == "unit") {
    const auto train_ex = traindata::read_unit_cache(
        (cache_dir / "unit.train.cache").string());
    const auto dev_ex =
        traindata::read_unit_cache((cache_dir / "unit.dev.cache").string());
    std::vector<std::string> texts;
    texts.reserve(train_ex.size() + dev_ex.size());
    for (const auto& ex : train_ex) texts.push_back(ex.text);
    for (const auto& ex : dev_ex) texts.push_back(ex.text);
    unitdet::UnitDetector model(unitdet::CharVocab::from_texts(texts),
                                cfg->unitdet.embed_dim, cfg->unitdet.hidden_dim,
                                cfg->seed);
    const unitdet::UnitTrainResult result =
        unitdet::train_unit_detector(model, train_ex, dev_ex, cfg->unit_hp(),
                                     log);
    losses = result.train_loss;
    write_curve(run_dir / "curve.csv", result.train_loss, result.dev_f1);
    model.save(model_dir.string());
    if (!bundle.empty()) {
      seed_bundle_dir(bundle, cache_dir, *cfg);
      model.save((fs::path(bundle) / "unit").string());
    }
  } else if (subtask == "modifier") {
    const auto train_ex = traindata::read_modifier_cache(
        (cache_dir / "modifier.train.cache").string());
    const auto dev_ex = traindata::read_modifier_cache(
        (cache_dir / "modifier.dev.cache").string());
    auto enc = encoder::make_encoder(cfg->encoder, tokenizer->vocab_size(),
                                     static_cast<int>(cfg->max_len));
    const int dim = enc->dim();
    modcls::ModifierModel model(std::move(enc), dim, cfg->modifier.dropout,
                                cfg->seed);
    const modcls::ModifierTrainResult result =
        modcls::train_modifier(model, train_ex, dev_ex, cfg->modifier_hp(),
                               log);
    losses = result.train_loss;
    std::cout << "threshold " << result.threshold << "\n";
    write_curve(run_dir / "curve.csv", result.train_loss, result.dev_f1);
    model.save(model_dir.string());
    if (!bundle.empty()) {
      seed_bundle_dir(bundle, cache_dir, *cfg);
      model.save((fs::path(bundle) / "modifier").string());
    }
  } else {
    const tagheads::TaggerVariant variant =
        tagheads::parse_tagger_variant(subtask);
    const auto train_ex = traindata::read_tag_cache(
        (cache_dir / (subtask + ".train.cache")).string());
    const auto dev_ex = traindata::read_tag_cache(
        (cache_dir / (subtask + ".dev.cache")).string());
    auto enc = encoder::make_encoder(cfg->encoder, tokenizer->vocab_size(),
                                     static_cast<int>(cfg->max_len));
    tagheads::TagHeadConfig head;
    head.dim = enc->dim();
    head.dropout = cfg->tagger.dropout;
    head.softmax_emissions = cfg->softmax_emissions;
    tagheads::TaggerModel model(variant, std::move(enc), head, cfg->seed);
    const tagheads::TagTrainResult result =
        tagheads::train_tagger(model, train_ex, dev_ex, cfg->tagger_hp(), log);
    losses = result.train_loss;
    write_curve(run_dir / "curve.csv", result.train_loss, result.dev_f1);
    model.save(model_dir.string());
    if (!bundle.empty()) {
      seed_bundle_dir(bundle, cache_dir, *cfg);
      model.save((fs::path(bundle) / subtask).string());
    }
  }

  if (const int rc = check_finite(losses); rc != kExitOk) return rc;
  std::cout << "checkpoint = " << model_dir.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------- predict

int run_predict(const CommonOpts& opts, const std::string& bundle_dir) {
  const std::optional<config::RunConfig> cfg = resolve_checked(opts);
  if (!cfg) return kExitData;
  if (cfg->text_dir.empty()) {
    std::cerr << "predict needs --text_dir\n";
    return kExitUsage;
  }

  pipeline::ModelBundle bundle = pipeline::load_bundle(bundle_dir);
  const Corpus corpus = load_corpus(cfg->text_dir, cfg->tsv_dir);

  const fs::path run_dir = config::create_run_dir(*cfg, "predict");
  auto [pred, report] = pipeline::run_corpus(corpus, bundle);

  const fs::path out_dir = run_dir / "predictions";
  fs::create_directories(out_dir);
  const std::size_t files = write_tsv(pred, out_dir.string());
  write_text(run_dir / "pipeline_report.txt", report.to_keyvalue());

  const std::vector<Violation> violations = validate_corpus(pred);
  if (!violations.empty()) return report_violations(violations);

  std::size_t sets = 0;
  for (const auto& [doc_id, doc_sets] : pred.annotation_sets) {
    sets += doc_sets.size();
  }
  std::cout << "documents = " << files << "\n";
  std::cout << "annotation_sets = " << sets << "\n";
  std::cout << report.to_keyvalue();
  std::cout << "predictions = " << out_dir.string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------------ evaluate

std::map<std::string, std::string> load_group_map(const std::string& path) {
  std::map<std::string, std::string> groups;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read group map '" + path + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t cut = line.find_first_of(" \t");
    if (cut == std::string::npos) {
      throw std::runtime_error("group map line without a group: " + line);
    }
    const std::string doc_id = line.substr(0, cut);
    std::size_t start = line.find_first_not_of(" \t", cut);
    if (start == std::string::npos) {
      throw std::runtime_error("group map line without a group: " + line);
    }
    groups[doc_id] = line.substr(start);
  }
  return groups;
}

int run_evaluate(const CommonOpts& opts, const std::string& pred_dir,
                 const std::string& gold_dir, bool optimal_pairing) {
  const std::optional<config::RunConfig> cfg = resolve_checked(opts);
  if (!cfg) return kExitData;
  const std::string text_dir =
      cfg->text_dir.empty() ? gold_dir : cfg->text_dir;

  const Corpus gold = load_corpus(text_dir, gold_dir);
  const Corpus pred = load_corpus(text_dir, pred_dir);

  metrics::ScoreOptions options;
  options.pairing = optimal_pairing ? metrics::PairingMode::kOptimal
                                    : metrics::PairingMode::kGreedy;
  if (!cfg->group_map.empty()) {
    options.group_of = load_group_map(cfg->group_map);
  }

  const metrics::MetricReport report = metrics::score_corpus(pred, gold, options);

  const fs::path run_dir = config::create_run_dir(*cfg, "evaluate");
  write_text(run_dir / "report.txt", metrics::to_table(report));
  write_text(run_dir / "report.kv", metrics::to_keyvalue(report));
  if (!report.per_group.empty()) {
    write_text(run_dir / "groups.csv", metrics::group_csv(report));
  }
  std::cout << metrics::to_table(report);
  std::cout << "report_dir = " << run_dir.string() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- report

int run_report(const std::string& run_dir, const std::string& format) {
  const fs::path dir = run_dir;
  std::vector<fs::path> candidates;
  if (format == "kv") {
    candidates = {dir / "report.kv"};
  } else if (format == "csv") {
    candidates = {dir / "groups.csv"};
  } else {
    candidates = {dir / "report.txt", dir / "pipeline_report.txt",
                  dir / "stats.txt"};
  }
  for (const fs::path& path : candidates) {
    std::ifstream in(path, std::ios::binary);
    if (!in) continue;
    std::cout << in.rdbuf();
    return kExitOk;
  }
  std::cerr << "no report found under '" << run_dir << "'\n";
  return kExitData;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Measurement extraction pipeline for scientific text"};
  app.require_subcommand(1);

  CommonOpts pre_opts, train_opts, predict_opts, eval_opts;
  std::string subtask, cache, bundle, pred_dir, gold_dir, report_run;
  std::string report_format = "table";
  bool optimal_pairing = false;

  CLI::App* pre = app.add_subcommand(
      "preprocess", "Validate a corpus and build training caches");
  add_config_options(pre, pre_opts);

  CLI::App* train =
      app.add_subcommand("train", "Train one model from preprocessed caches");
  add_config_options(train, train_opts);
  train
      ->add_option("--subtask", subtask,
                   "One of quantity, unit, modifier, entity, property, "
                   "qualifier_q, qualifier_p")
      ->required()
      ->check(CLI::IsMember({"quantity", "unit", "modifier", "entity",
                             "property", "qualifier_q", "qualifier_p"}));
  train->add_option("--cache", cache, "Preprocess run directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  train->add_option("--bundle", bundle,
                    "Also install the checkpoint into this bundle directory");

  CLI::App* predict = app.add_subcommand(
      "predict", "Run the full pipeline over a document directory");
  add_config_options(predict, predict_opts);
  predict->add_option("--bundle", bundle, "Complete model bundle directory")
      ->required();

  CLI::App* evaluate = app.add_subcommand(
      "evaluate", "Score predicted TSVs against gold TSVs");
  add_config_options(evaluate, eval_opts);
  evaluate->add_option("--pred", pred_dir, "Directory of predicted TSVs")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--gold", gold_dir, "Directory of gold TSVs")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_flag("--optimal-pairing", optimal_pairing,
                     "Use assignment-optimal item pairing instead of greedy");

  CLI::App* report =
      app.add_subcommand("report", "Print the reports of a previous run");
  report->add_option("--run", report_run, "Run directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  report->add_option("--format", report_format, "table, kv, or csv")
      ->check(CLI::IsMember({"table", "kv", "csv"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (pre->parsed()) return run_preprocess(pre_opts);
    if (train->parsed()) return run_train(train_opts, subtask, cache, bundle);
    if (predict->parsed()) return run_predict(predict_opts, bundle);
    if (evaluate->parsed()) {
      return run_evaluate(eval_opts, pred_dir, gold_dir, optimal_pairing);
    }
    if (report->parsed()) return run_report(report_run, report_format);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
