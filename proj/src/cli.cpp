#include "pbg2p/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "pbg2p/baseline.hpp"
#include "pbg2p/benchmark.hpp"
#include "pbg2p/checkpoint.hpp"
#include "pbg2p/errors.hpp"
#include "pbg2p/eval.hpp"
#include "pbg2p/gradcheck.hpp"
#include "pbg2p/inference.hpp"
#include "pbg2p/log.hpp"
#include "pbg2p/synth.hpp"
#include "pbg2p/training.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error("failed writing " + path.string());
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
  write_text(path, j.dump(2) + "\n");
}

// Plain text lines or corpus records; only the text is kept.
std::vector<std::u32string> read_texts(std::istream& in) {
  std::vector<std::u32string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    try {
      out.push_back(line.front() == '{' ? parse_record(line).text : utf8::decode(line));
    } catch (const ParseError& e) {
      throw ParseError(e.what(), n);
    }
  }
  return out;
}

std::vector<std::u32string> read_texts(const std::string& path) {
  if (path == "-") return read_texts(std::cin);
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  return read_texts(f);
}

std::vector<std::u32string> texts_of(std::span<const LabeledSentence> corpus) {
  std::vector<std::u32string> out;
  for (const auto& s : corpus) out.push_back(s.text);
  return out;
}

std::string split_name(const std::string& path) { return fs::path(path).stem().string(); }

std::string metrics_path(const std::string& explicit_path, const std::string& out) {
  return explicit_path.empty() ? out + ".metrics.jsonl" : explicit_path;
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing required option ") + flag);
}

struct ModelFlags {
  ModelConfig config = benchmark_spec().model;

  void add(CLI::App* cmd) {
    cmd->add_option("--d-model", config.d_model, "Hidden size")->capture_default_str();
    cmd->add_option("--layers", config.n_layers, "Encoder layers")->capture_default_str();
    cmd->add_option("--heads", config.n_heads, "Attention heads")->capture_default_str();
    cmd->add_option("--d-ff", config.d_ff, "Feed-forward size")->capture_default_str();
    cmd->add_option("--max-len", config.max_len, "Maximum tokens per sequence")->capture_default_str();
    cmd->add_option("--dropout", config.dropout, "Dropout rate")->capture_default_str();
  }
};

struct TrainFlags {
  TrainConfig config;

  void add(CLI::App* cmd, const TrainConfig& defaults) {
    config = defaults;
    cmd->add_option("--lr", config.learning_rate, "Learning rate")->capture_default_str();
    cmd->add_option("--batch", config.batch_size, "Batch size")->capture_default_str();
    cmd->add_option("--steps", config.steps, "Optimizer steps (0: use --epochs)")->capture_default_str();
    cmd->add_option("--epochs", config.epochs, "Passes over the corpus when --steps is 0")->capture_default_str();
    cmd->add_option("--clip", config.clip_norm, "Global gradient norm clip (0: off)")->capture_default_str();
    cmd->add_option("--eval-every", config.eval_every, "Steps between evaluations (0: per epoch)")->capture_default_str();
    cmd->add_option("--checkpoint-every", config.checkpoint_every, "Steps between checkpoints (0: off)")->capture_default_str();
  }
};

int cmd_lexicon_check(const std::string& lexicon_path, const std::string& monophones,
                      std::size_t base_size, std::size_t d_model) {
  require(lexicon_path, "--lexicon");
  auto lexicon = Lexicon::load(lexicon_path);
  if (!monophones.empty()) lexicon.load_monophones(monophones);
  std::cout << "polyphones: " << lexicon.entries().size() << "\n"
            << "readings: " << lexicon.ncmc_count() << "\n"
            << "monophones: " << lexicon.monophones().size() << "\n";
  if (base_size > 0) {
    std::cout << "extended vocabulary: " << base_size + lexicon.ncmc_count() << "\n"
              << "extra parameters at d=" << d_model << ": "
              << extension_delta(lexicon.ncmc_count(), d_model) << "\n";
  }
  return 0;
}

struct SynthSizes {
  std::size_t pretrain, train, dev, test, repeated;
};

int cmd_synth(const std::string& out, std::uint64_t seed, const SynthSizes& sizes) {
  require(out, "--out");
  auto spec = benchmark_spec();
  spec.language.seed = seed;
  spec.pretrain_sentences = sizes.pretrain;
  spec.train_sentences = sizes.train;
  spec.dev_sentences = sizes.dev;
  spec.test_sentences = sizes.test;
  spec.repeated_sentences = sizes.repeated;
  fs::create_directories(out);
  const auto data = make_benchmark_data(spec);
  const fs::path dir(out);
  write_text(dir / "lexicon.tsv", data.language.lexicon.to_tsv());
  write_text(dir / "monophones.tsv", data.language.lexicon.monophones_to_tsv());
  std::vector<LabeledSentence> pretrain;
  for (const auto& t : data.pretrain_text) pretrain.push_back({t, {}});
  write_corpus(dir / "pretrain.jsonl", pretrain);
  write_corpus(dir / "train.jsonl", data.train);
  write_corpus(dir / "dev.jsonl", data.dev);
  write_corpus(dir / "test1.jsonl", data.test);
  write_corpus(dir / "test4.jsonl", data.repeated);
  log::info("wrote synthetic benchmark to " + out);
  return 0;
}

int cmd_stats(const std::vector<std::string>& corpora, const std::string& out) {
  if (corpora.empty()) throw ConfigError("missing required option --corpus");
  std::vector<SplitStats> stats;
  for (const auto& path : corpora) stats.push_back(dataset_stats(split_name(path), read_corpus(path)));
  std::cout << format_stats_table(stats);
  if (!out.empty()) write_json(out, stats_to_json(stats));
  return 0;
}

int cmd_pretrain(const std::string& corpus_path, const std::string& lexicon_path,
                 const std::string& dev_path, const std::string& out, const std::string& metrics,
                 ModelConfig model, TrainConfig train) {
  require(corpus_path, "--corpus");
  require(out, "--out");
  const auto corpus = read_texts(corpus_path);
  const Lexicon lexicon = lexicon_path.empty() ? Lexicon{} : Lexicon::load(lexicon_path);
  const auto vocab = pretraining_vocab(corpus, lexicon);
  model.vocab_size = vocab.size();
  model.seed = train.seed;
  std::vector<std::u32string> held_out;
  if (!dev_path.empty()) held_out = read_texts(dev_path);
  MetricsLog log;
  const auto params = pretrain_base(corpus, vocab, model, train, &log, held_out);
  save_model(out, params, vocab);
  log.write(metrics_path(metrics, out));
  log::info("base model with " + std::to_string(param_count(params)) + " parameters written to " + out);
  return 0;
}

int cmd_extend(const std::string& base_ckpt, const std::string& lexicon_path,
               const std::string& mode, const std::string& out) {
  require(base_ckpt, "--base-ckpt");
  require(lexicon_path, "--lexicon");
  require(out, "--out");
  const auto base = load_model(base_ckpt);
  if (base.vocab.ncmc_count() != 0) throw ConfigError(base_ckpt + " is already extended");
  const auto lexicon = Lexicon::load(lexicon_path);
  const auto extended = VocabMap::build(base.vocab.base_tokens(), lexicon);
  const auto init = mode == "unk" ? InitMode::unk : InitMode::scpc;
  const auto params = extend_and_init(base.params, base.vocab, extended, init);
  save_model(out, params, extended);
  std::cout << "vocabulary: " << base.vocab.size() << " -> " << extended.size() << "\n"
            << "parameters: " << param_count(base.params) << " -> " << param_count(params) << " (+"
            << extension_delta(extended.ncmc_count(), params.config.d_model) << ")\n";
  return 0;
}

int cmd_train(const std::string& ckpt, const std::string& corpus_path, const std::string& dev_path,
              const std::string& out, const std::string& metrics, const TrainConfig& train) {
  require(ckpt, "--ckpt");
  require(corpus_path, "--corpus");
  require(out, "--out");
  auto model = load_model(ckpt);
  if (model.vocab.ncmc_count() == 0) throw ConfigError(ckpt + " has no polyphone tokens; run extend first");
  const auto corpus = read_corpus(corpus_path);
  std::vector<LabeledSentence> dev;
  if (!dev_path.empty()) dev = read_corpus(dev_path);
  const auto vocab = model.vocab;
  auto result = train_polyphone(corpus, vocab, std::move(model.params), train, dev,
                                [&](std::size_t step, const Parameters<float>& p) {
                                  save_model(out + ".step" + std::to_string(step), p, vocab);
                                });
  save_model(out, result.params, vocab);
  result.log.write(metrics_path(metrics, out));
  return 0;
}

int cmd_train_baseline(const std::string& base_ckpt, const std::string& lexicon_path,
                       const std::string& corpus_path, const std::string& dev_path,
                       const std::string& out, const std::string& metrics, bool freeze,
                       std::size_t hidden, double dropout, const TrainConfig& train) {
  require(base_ckpt, "--base-ckpt");
  require(lexicon_path, "--lexicon");
  require(corpus_path, "--corpus");
  require(out, "--out");
  auto base = load_model(base_ckpt);
  if (base.vocab.ncmc_count() != 0) throw ConfigError("the baseline starts from a base checkpoint");
  const auto lexicon = Lexicon::load(lexicon_path);
  const auto corpus = read_corpus(corpus_path);
  std::vector<LabeledSentence> dev;
  if (!dev_path.empty()) dev = read_corpus(dev_path);
  auto head = init_classifier_head(base.params.config.d_model, lexicon, hidden, dropout, train.seed);
  auto result = train_classifier(corpus, base.vocab, lexicon, std::move(base.params), std::move(head),
                                 freeze, train, dev);
  save_baseline(out, result.encoder, base.vocab, lexicon, result.head);
  result.log.write(metrics_path(metrics, out));
  return 0;
}

// Either checkpoint kind behind one prediction function.
using Predictor = std::function<std::vector<PredictionReport>(std::span<const std::u32string>)>;

Predictor load_predictor(const std::string& ckpt_path, std::string* kind) {
  auto ckpt = read_checkpoint(ckpt_path);
  if (is_baseline(ckpt)) {
    auto b = std::make_shared<LoadedBaseline>(baseline_from(std::move(ckpt)));
    if (kind) *kind = "baseline";
    return [b](std::span<const std::u32string> texts) {
      return classify_many(b->encoder, b->head, b->vocab, b->lexicon, texts);
    };
  }
  auto m = std::make_shared<LoadedModel>(load_model(ckpt_path));
  if (m->vocab.ncmc_count() == 0) throw ConfigError(ckpt_path + " has no polyphone tokens");
  if (kind) *kind = "polyphone";
  return [m](std::span<const std::u32string> texts) { return predict_many(m->params, m->vocab, texts); };
}

int cmd_eval(const std::string& ckpt, const std::vector<std::string>& corpora,
             const std::string& out, const std::string& system, bool per_scpc) {
  require(ckpt, "--ckpt");
  if (corpora.empty()) throw ConfigError("missing required option --corpus");
  std::string kind;
  const auto predictor = load_predictor(ckpt, &kind);
  std::vector<SplitResult> splits;
  for (const auto& path : corpora) {
    const auto gold = read_corpus(path);
    splits.push_back(score(split_name(path), predictor(texts_of(gold)), gold));
  }
  const auto result = summarize(system.empty() ? kind : system, std::move(splits));
  std::cout << format_table(result, per_scpc);
  if (!out.empty()) write_json(out, to_json(result));
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& input, const std::string& out) {
  require(ckpt, "--ckpt");
  const auto predictor = load_predictor(ckpt, nullptr);
  const auto texts = read_texts(input.empty() ? std::string("-") : input);
  std::string lines;
  for (const auto& r : predictor(texts)) lines += report_to_json(r).dump() + "\n";
  if (out.empty() || out == "-") {
    std::cout << lines;
  } else {
    write_text(out, lines);
  }
  return 0;
}

int cmd_init_probe(const std::string& base_ckpt, const std::string& lexicon_path,
                   const std::string& input, std::size_t limit, const std::string& out) {
  require(base_ckpt, "--base-ckpt");
  require(lexicon_path, "--lexicon");
  require(input, "--corpus");
  const auto base = load_model(base_ckpt);
  const auto lexicon = Lexicon::load(lexicon_path);
  const auto extended = VocabMap::build(base.vocab.base_tokens(), lexicon);
  const auto scpc = extend_and_init(base.params, base.vocab, extended, InitMode::scpc);
  const auto unk = extend_and_init(base.params, base.vocab, extended, InitMode::unk);
  auto texts = read_texts(input);
  if (limit > 0 && texts.size() > limit) texts.resize(limit);
  const auto rows = init_probe(scpc, unk, extended, texts);
  std::cout << format_probe_table(rows);
  if (!out.empty()) {
    auto j = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
      nlohmann::ordered_json jr;
      jr["sentence"] = r.sentence;
      jr["index"] = r.char_index;
      jr["char"] = utf8::encode(r.scpc);
      jr["candidates"] = nlohmann::ordered_json::array();
      for (std::size_t c = 0; c < r.readings.size(); ++c) {
        jr["candidates"].push_back({{"pinyin", r.readings[c].str()},
                                    {"scpc_init", r.scpc_init[c]},
                                    {"unk_init", r.unk_init[c]}});
      }
      j.push_back(std::move(jr));
    }
    write_json(out, j);
  }
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const auto c = make_gradcheck_case(seed);
  const auto r64 = gradcheck_64(c);
  const auto r32 = gradcheck_32(c);
  std::cout << format_report(r64) << format_report(r32);
  return r64.passed() && r32.passed() ? 0 : 1;
}

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Polyphone disambiguation by splitting polyphonic characters into per-reading tokens",
               "pbg2p"};
  app.set_config("--config", "", "INI/TOML file with option values; command-line flags override it");
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Only log warnings and errors");

  const auto bench = benchmark_spec();
  std::string lexicon, monophones, corpus_one, dev, base_ckpt, ckpt, out, metrics, mode = "scpc",
                                                                               system;
  std::vector<std::string> corpora;
  std::uint64_t seed = 1;
  bool freeze = false, per_scpc = false;
  std::size_t base_size = 0, lex_d_model = 768, limit = 0;
  std::size_t hidden = bench.classifier_hidden;
  double head_dropout = bench.classifier_dropout;
  SynthSizes sizes{bench.pretrain_sentences, bench.train_sentences, bench.dev_sentences,
                   bench.test_sentences, bench.repeated_sentences};
  ModelFlags model;
  TrainFlags pretrain_flags, train_flags, baseline_flags;
  std::function<int()> action;

  auto* lex = app.add_subcommand("lexicon-check", "Validate a lexicon and report vocabulary accounting");
  lex->add_option("--lexicon", lexicon, "Polyphone lexicon TSV");
  lex->add_option("--monophones", monophones, "Monophone TSV");
  lex->add_option("--base-size", base_size, "Base vocabulary size to extend");
  lex->add_option("--d-model", lex_d_model, "Hidden size for the parameter count")->capture_default_str();
  lex->callback([&] { action = [&] { return cmd_lexicon_check(lexicon, monophones, base_size, lex_d_model); }; });

  auto* synth = app.add_subcommand("synth", "Generate the synthetic benchmark corpus");
  synth->add_option("--out", out, "Output directory");
  synth->add_option("--seed", seed, "Language and corpus seed")->capture_default_str();
  synth->add_option("--pretrain-sentences", sizes.pretrain)->capture_default_str();
  synth->add_option("--train-sentences", sizes.train)->capture_default_str();
  synth->add_option("--dev-sentences", sizes.dev)->capture_default_str();
  synth->add_option("--test-sentences", sizes.test)->capture_default_str();
  synth->add_option("--repeated-sentences", sizes.repeated)->capture_default_str();
  synth->callback([&] { action = [&] { return cmd_synth(out, seed, sizes); }; });

  auto* stats = app.add_subcommand("stats", "Dataset statistics per split");
  stats->add_option("--corpus", corpora, "Corpus files (repeatable)");
  stats->add_option("--out", out, "JSON output");
  stats->callback([&] { action = [&] { return cmd_stats(corpora, out); }; });

  auto* pretrain = app.add_subcommand("pretrain", "Masked-LM pre-training of the base model");
  pretrain->add_option("--corpus", corpus_one, "Pre-training text (plain lines or corpus records)");
  pretrain->add_option("--lexicon", lexicon, "Lexicon whose polyphones join the base vocabulary");
  pretrain->add_option("--dev", dev, "Held-out text for masked-token accuracy");
  pretrain->add_option("--out", out, "Base checkpoint to write");
  pretrain->add_option("--metrics", metrics, "Metrics log (default: <out>.metrics.jsonl)");
  pretrain->add_option("--seed", pretrain_flags.config.seed, "Initialization, masking and order seed");
  model.add(pretrain);
  pretrain_flags.add(pretrain, bench.pretrain);
  pretrain->callback([&] {
    action = [&] { return cmd_pretrain(corpus_one, lexicon, dev, out, metrics, model.config, pretrain_flags.config); };
  });

  auto* extend = app.add_subcommand("extend", "Add per-reading tokens to a base checkpoint");
  extend->add_option("--base-ckpt", base_ckpt, "Base checkpoint");
  extend->add_option("--lexicon", lexicon, "Polyphone lexicon TSV");
  extend->add_option("--mode", mode, "Initialize new tokens from the polyphone or from [UNK]")
      ->check(CLI::IsMember({"scpc", "unk"}))
      ->capture_default_str();
  extend->add_option("--out", out, "Extended checkpoint to write");
  extend->callback([&] { action = [&] { return cmd_extend(base_ckpt, lexicon, mode, out); }; });

  auto* train = app.add_subcommand("train", "Polyphone training of an extended checkpoint");
  train->add_option("--ckpt", ckpt, "Extended checkpoint");
  train->add_option("--corpus", corpus_one, "Labeled training corpus");
  train->add_option("--dev", dev, "Labeled held-out corpus");
  train->add_option("--out", out, "Trained checkpoint to write");
  train->add_option("--metrics", metrics, "Metrics log (default: <out>.metrics.jsonl)");
  train_flags.add(train, bench.polyphone);
  train->add_option("--seed", train_flags.config.seed, "Order and dropout seed")->capture_default_str();
  train->callback([&] {
    action = [&] { return cmd_train(ckpt, corpus_one, dev, out, metrics, train_flags.config); };
  });

  auto* baseline = app.add_subcommand("train-baseline", "Train the encoder + classifier baseline");
  baseline->add_option("--base-ckpt", base_ckpt, "Base checkpoint");
  baseline->add_option("--lexicon", lexicon, "Polyphone lexicon TSV");
  baseline->add_option("--corpus", corpus_one, "Labeled training corpus");
  baseline->add_option("--dev", dev, "Labeled held-out corpus");
  baseline->add_option("--out", out, "Baseline checkpoint to write");
  baseline->add_option("--metrics", metrics, "Metrics log (default: <out>.metrics.jsonl)");
  baseline->add_flag("--freeze", freeze, "Keep the encoder fixed and train only the classifier");
  baseline->add_option("--hidden", hidden, "Classifier hidden units")->capture_default_str();
  baseline->add_option("--head-dropout", head_dropout, "Classifier dropout")->capture_default_str();
  baseline_flags.add(baseline, bench.baseline);
  baseline->add_option("--seed", baseline_flags.config.seed, "Head init, order and dropout seed")
      ->capture_default_str();
  baseline->callback([&] {
    action = [&] {
      return cmd_train_baseline(base_ckpt, lexicon, corpus_one, dev, out, metrics, freeze, hidden,
                                head_dropout, baseline_flags.config);
    };
  });

  auto* eval = app.add_subcommand("eval", "Accuracy of a checkpoint on labeled test files");
  eval->add_option("--ckpt", ckpt, "Polyphone or baseline checkpoint");
  eval->add_option("--corpus", corpora, "Labeled test files (repeatable)");
  eval->add_option("--out", out, "JSON result file");
  eval->add_option("--system", system, "System name in the report");
  eval->add_flag("--per-scpc", per_scpc, "Add a per-character breakdown");
  eval->callback([&] { action = [&] { return cmd_eval(ckpt, corpora, out, system, per_scpc); }; });

  auto* predict = app.add_subcommand("predict", "Predict readings for each input line");
  predict->add_option("--ckpt", ckpt, "Polyphone or baseline checkpoint");
  predict->add_option("--corpus", corpus_one, "Input lines ('-' or omitted: stdin)");
  predict->add_option("--out", out, "Output JSON lines (default: stdout)");
  predict->callback([&] { action = [&] { return cmd_predict(ckpt, corpus_one, out); }; });

  auto* probe = app.add_subcommand("init-probe", "Initial per-reading probabilities under both init modes");
  probe->add_option("--base-ckpt", base_ckpt, "Base checkpoint");
  probe->add_option("--lexicon", lexicon, "Polyphone lexicon TSV");
  probe->add_option("--corpus", corpus_one, "Sample sentences");
  probe->add_option("--limit", limit, "Probe at most this many sentences (0: all)");
  probe->add_option("--out", out, "JSON output");
  probe->callback([&] { action = [&] { return cmd_init_probe(base_ckpt, lexicon, corpus_one, limit, out); }; });

  auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient on a tiny model");
  grad->add_option("--seed", seed, "Case seed")->capture_default_str();
  grad->callback([&] { action = [&] { return cmd_gradcheck(seed); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }
  if (quiet) log::set_level(log::Level::warn);

  for (const auto* sub : app.get_subcommands()) {
    log::info("resolved configuration [" + sub->get_name() + "]\n" + sub->config_to_str(true, false));
  }
  try {
    return action ? action() : 2;
  } catch (const std::exception& e) {
    log::error(e.what());
    return 1;
  }
}

}  // namespace pbg2p
