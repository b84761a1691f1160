#include "pbg2p/inference.hpp"

#include "pbg2p/errors.hpp"
#include "pbg2p/loss.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

Prediction decide(std::size_t char_index, char32_t scpc, std::vector<CandidateProbability> raw) {
  if (raw.empty()) throw ConfigError("no candidates to decide between");
  double total = 0.0;
  for (const auto& c : raw) total += c.probability;
  Prediction p{char_index, scpc, raw.front().pinyin, {}, std::move(raw)};
  std::size_t best = 0;
  for (std::size_t i = 0; i < p.raw_probs.size(); ++i) {
    p.candidate_probs.push_back({p.raw_probs[i].pinyin, p.raw_probs[i].probability / total});
    if (p.candidate_probs[i].probability > p.candidate_probs[best].probability) best = i;
  }
  p.chosen = p.candidate_probs[best].pinyin;
  return p;
}

std::vector<PredictionReport> predict_many(const Parameters<float>& params, const VocabMap& vocab,
                                           std::span<const std::u32string> texts,
                                           std::size_t batch_size) {
  std::vector<PredictionReport> reports;
  reports.reserve(texts.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const auto end = std::min(texts.size(), start + batch_size);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = start; i < end; ++i) {
      if (texts[i].size() + 2 > params.config.max_len) {
        throw RangeError("sentence " + std::to_string(i) + " has " + std::to_string(texts[i].size()) +
                         " characters; the model accepts at most " +
                         std::to_string(params.config.max_len - 2));
      }
      seqs.push_back(vocab.encode(std::u32string_view(texts[i])));
    }
    const TokenBatch batch = TokenBatch::pad(seqs);
    std::vector<Eigen::Index> rows;
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t c = 0; c < texts[i].size(); ++c) {
        if (vocab.is_scpc(texts[i][c])) {
          rows.push_back(static_cast<Eigen::Index>((i - start) * batch.length + c + 1));
        }
      }
    }
    Matrix<double> probs;
    if (!rows.empty()) {
      const Matrix<float> hidden = encode(params, batch, ForwardOptions{});
      Matrix<float> selected(static_cast<Eigen::Index>(rows.size()), hidden.cols());
      for (std::size_t k = 0; k < rows.size(); ++k) {
        selected.row(static_cast<Eigen::Index>(k)) = hidden.row(rows[k]);
      }
      probs = softmax_rows(mlm_head(params, selected).cast<double>());
    }
    std::size_t k = 0;
    for (std::size_t i = start; i < end; ++i) {
      PredictionReport report{texts[i], {}};
      for (std::size_t c = 0; c < texts[i].size(); ++c) {
        const char32_t ch = texts[i][c];
        if (!vocab.is_scpc(ch)) continue;
        std::vector<CandidateProbability> raw;
        for (const auto& cand : vocab.candidates(ch)) {
          raw.push_back({cand.pinyin, probs(static_cast<Eigen::Index>(k), cand.id)});
        }
        report.predictions.push_back(decide(c, ch, std::move(raw)));
        ++k;
      }
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

PredictionReport predict(const Parameters<float>& params, const VocabMap& vocab,
                         std::u32string_view text) {
  const std::u32string owned(text);
  return std::move(predict_many(params, vocab, std::span(&owned, 1)).front());
}

std::vector<std::optional<Pinyin>> g2p_annotate(const Parameters<float>& params,
                                                const VocabMap& vocab, const Lexicon& lexicon,
                                                std::u32string_view text) {
  std::vector<std::optional<Pinyin>> out(text.size());
  bool any_polyphone = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (vocab.is_scpc(text[i])) {
      any_polyphone = true;
    } else {
      out[i] = lexicon.monophone(text[i]);
    }
  }
  if (any_polyphone) {
    for (const auto& p : predict(params, vocab, text).predictions) out[p.char_index] = p.chosen;
  }
  return out;
}

nlohmann::ordered_json report_to_json(const PredictionReport& report) {
  nlohmann::ordered_json j;
  j["text"] = utf8::encode(report.text);
  j["predictions"] = nlohmann::ordered_json::array();
  for (const auto& p : report.predictions) {
    nlohmann::ordered_json item;
    item["index"] = p.char_index;
    item["char"] = utf8::encode(p.scpc);
    item["pinyin"] = p.chosen.str();
    item["probs"] = nlohmann::ordered_json::object();
    item["raw_probs"] = nlohmann::ordered_json::object();
    for (const auto& c : p.candidate_probs) item["probs"][c.pinyin.str()] = c.probability;
    for (const auto& c : p.raw_probs) item["raw_probs"][c.pinyin.str()] = c.probability;
    j["predictions"].push_back(std::move(item));
  }
  return j;
}

}  // namespace pbg2p
