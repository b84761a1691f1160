#include "pbg2p/eval.hpp"

#include <cstdio>

#include "pbg2p/errors.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string pad_right(std::string s, std::size_t width) {
  // Width counts scalars so CJK labels line up by character.
  const auto n = utf8::decode(s).size();
  if (n < width) s.append(width - n, ' ');
  return s;
}

std::string pad_left(const std::string& s, std::size_t width) {
  const auto n = utf8::decode(s).size();
  return n < width ? std::string(width - n, ' ') + s : s;
}

}  // namespace

SplitResult score(std::string name, std::span<const PredictionReport> predictions,
                  std::span<const LabeledSentence> gold) {
  if (predictions.size() != gold.size()) {
    throw Error("split " + name + ": " + std::to_string(predictions.size()) +
                " prediction reports for " + std::to_string(gold.size()) + " sentences");
  }
  SplitResult r;
  r.name = std::move(name);
  r.sentences = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto& report = predictions[i];
    const auto& sentence = gold[i];
    if (report.text != sentence.text) {
      throw Error("split " + r.name + ": sentence " + std::to_string(i) +
                  " differs between predictions and gold: " + utf8::encode(sentence.text));
    }
    if (report.predictions.size() != sentence.labels.size()) {
      throw Error("split " + r.name + ": sentence " + std::to_string(i) + " has " +
                  std::to_string(sentence.labels.size()) + " gold labels but " +
                  std::to_string(report.predictions.size()) + " predictions");
    }
    for (std::size_t k = 0; k < sentence.labels.size(); ++k) {
      const auto& label = sentence.labels[k];
      const auto& pred = report.predictions[k];
      if (pred.char_index != label.index) {
        throw Error("split " + r.name + ": sentence " + std::to_string(i) +
                    " predicts char " + std::to_string(pred.char_index) + " where gold labels char " +
                    std::to_string(label.index));
      }
      const bool ok = pred.chosen == label.pinyin;
      auto& t = r.per_scpc[sentence.text[label.index]];
      ++t.scored;
      ++r.scored;
      if (ok) {
        ++t.correct;
        ++r.correct;
      }
    }
  }
  r.accuracy = r.scored ? static_cast<double>(r.correct) / static_cast<double>(r.scored) : 0.0;
  return r;
}

EvalResult summarize(std::string system, std::vector<SplitResult> splits) {
  EvalResult e{std::move(system), std::move(splits), 0.0};
  for (const auto& s : e.splits) e.average += s.accuracy;
  if (!e.splits.empty()) e.average /= static_cast<double>(e.splits.size());
  return e;
}

std::string format_table(const EvalResult& result, bool per_scpc) {
  std::string out = pad_right("System", 28);
  for (const auto& s : result.splits) out += pad_left(s.name, 12);
  out += pad_left("Average", 12) + "\n";
  out += pad_right(result.system, 28);
  for (const auto& s : result.splits) out += pad_left(fixed(100.0 * s.accuracy, 2), 12);
  out += pad_left(fixed(100.0 * result.average, 2), 12) + "\n";
  if (per_scpc) {
    for (const auto& s : result.splits) {
      out += "\n[" + s.name + "] " + std::to_string(s.correct) + "/" + std::to_string(s.scored) + "\n";
      for (const auto& [c, t] : s.per_scpc) {
        out += "  " + utf8::encode(c) + pad_left(std::to_string(t.correct) + "/" + std::to_string(t.scored), 14) +
               pad_left(fixed(t.scored ? 100.0 * static_cast<double>(t.correct) / static_cast<double>(t.scored) : 0.0, 2), 10) + "\n";
      }
    }
  }
  return out;
}

nlohmann::ordered_json to_json(const EvalResult& result) {
  nlohmann::ordered_json j;
  j["system"] = result.system;
  j["splits"] = nlohmann::ordered_json::array();
  for (const auto& s : result.splits) {
    nlohmann::ordered_json js;
    js["split"] = s.name;
    js["sentences"] = s.sentences;
    js["scored"] = s.scored;
    js["correct"] = s.correct;
    js["accuracy"] = s.accuracy;
    js["per_scpc"] = nlohmann::ordered_json::object();
    for (const auto& [c, t] : s.per_scpc) {
      js["per_scpc"][utf8::encode(c)] = {{"scored", t.scored}, {"correct", t.correct}};
    }
    j["splits"].push_back(std::move(js));
  }
  j["average"] = result.average;
  return j;
}

SplitStats dataset_stats(std::string name, std::span<const LabeledSentence> corpus) {
  SplitStats s{std::move(name), corpus.size(), 0, {}};
  for (const auto& sentence : corpus) {
    for (const auto& label : sentence.labels) {
      ++s.occurrences;
      ++s.readings[sentence.text.at(label.index)][label.pinyin.str()];
    }
  }
  return s;
}

std::string format_stats_table(std::span<const SplitStats> stats) {
  std::string out = pad_right("", 16) + pad_left("sentences", 12) + pad_left("polyphones", 12) + "\n";
  for (const auto& s : stats) {
    out += pad_right(s.name, 16) + pad_left(std::to_string(s.sentences), 12) +
           pad_left(std::to_string(s.occurrences), 12) + "\n";
  }
  for (const auto& s : stats) {
    out += "\n[" + s.name + "]\n";
    for (const auto& [c, readings] : s.readings) {
      std::size_t total = 0;
      std::string detail;
      for (const auto& [p, n] : readings) {
        total += n;
        detail += "  " + p + ":" + std::to_string(n);
      }
      out += "  " + utf8::encode(c) + pad_left(std::to_string(total), 8) + detail + "\n";
    }
  }
  return out;
}

nlohmann::ordered_json stats_to_json(std::span<const SplitStats> stats) {
  auto j = nlohmann::ordered_json::array();
  for (const auto& s : stats) {
    nlohmann::ordered_json js;
    js["split"] = s.name;
    js["sentences"] = s.sentences;
    js["occurrences"] = s.occurrences;
    js["readings"] = nlohmann::ordered_json::object();
    for (const auto& [c, readings] : s.readings) {
      auto& jc = js["readings"][utf8::encode(c)];
      jc = nlohmann::ordered_json::object();
      for (const auto& [p, n] : readings) jc[p] = n;
    }
    j.push_back(std::move(js));
  }
  return j;
}

std::vector<ProbeRow> init_probe(const Parameters<float>& scpc_init,
                                 const Parameters<float>& unk_init, const VocabMap& vocab,
                                 std::span<const std::u32string> sentences) {
  if (scpc_init.config != unk_init.config || scpc_init.config.vocab_size != vocab.size()) {
    throw ConfigError("init probe needs two models over the same extended vocabulary");
  }
  const auto a = predict_many(scpc_init, vocab, sentences);
  const auto b = predict_many(unk_init, vocab, sentences);
  std::vector<ProbeRow> rows;
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    for (std::size_t k = 0; k < a[i].predictions.size(); ++k) {
      const auto& pa = a[i].predictions[k];
      const auto& pb = b[i].predictions[k];
      ProbeRow row{i, pa.char_index, pa.scpc, {}, {}, {}};
      for (std::size_t c = 0; c < pa.raw_probs.size(); ++c) {
        row.readings.push_back(pa.raw_probs[c].pinyin);
        row.scpc_init.push_back(pa.raw_probs[c].probability);
        row.unk_init.push_back(pb.raw_probs[c].probability);
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string format_probe_table(std::span<const ProbeRow> rows) {
  std::string out;
  for (const auto& r : rows) {
    out += "sentence " + std::to_string(r.sentence) + ", char " + std::to_string(r.char_index) +
           " '" + utf8::encode(r.scpc) + "'\n";
    out += pad_right("", 12);
    for (std::size_t c = 0; c < r.readings.size(); ++c) {
      out += pad_left(utf8::encode(r.scpc) + std::to_string(c + 1) + "(" + r.readings[c].str() + ")", 16);
    }
    out += "\n" + pad_right("SCPC init", 12);
    for (double p : r.scpc_init) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4g", p);
      out += pad_left(buf, 16);
    }
    out += "\n" + pad_right("UNK init", 12);
    for (double p : r.unk_init) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4g", p);
      out += pad_left(buf, 16);
    }
    out += "\n";
  }
  return out;
}

}  // namespace pbg2p
