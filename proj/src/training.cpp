#include "pbg2p/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "pbg2p/errors.hpp"
#include "pbg2p/eval.hpp"
#include "pbg2p/inference.hpp"
#include "pbg2p/log.hpp"
#include "pbg2p/loss.hpp"
#include "pbg2p/random.hpp"

namespace pbg2p {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning rate must be a positive number");
  }
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  if (!(clip_norm >= 0.0)) throw ConfigError("clip norm must be non-negative");
  if (!(mask_rate > 0.0 && mask_rate <= 1.0)) throw ConfigError("mask rate must lie in (0, 1]");
}

std::string MetricsLog::to_jsonl() const {
  std::string out;
  for (const auto& r : records_) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["split"] = r.split;
    j["loss"] = r.loss;
    if (r.accuracy) {
      j["accuracy"] = *r.accuracy;
    } else {
      j["accuracy"] = nullptr;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

void MetricsLog::write(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << to_jsonl();
  if (!f) throw Error("failed writing " + path.string());
}

MlmBatch make_mlm_batch(std::span<const TrainingExample> examples) {
  std::vector<std::vector<TokenId>> seqs;
  seqs.reserve(examples.size());
  for (const auto& e : examples) seqs.push_back(e.input_ids);
  MlmBatch b{TokenBatch::pad(seqs), {}, {}};
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& e = examples[i];
    for (std::size_t k = 0; k < e.target_positions.size(); ++k) {
      b.target_rows.push_back(i * b.tokens.length + e.target_positions[k]);
      b.target_ids.push_back(e.target_ids[k]);
    }
  }
  return b;
}

template <class T>
T mlm_gradients(const Parameters<T>& params, const MlmBatch& batch, const ForwardOptions& options,
                Parameters<T>* grads) {
  EncoderTrace<T> encoder_trace;
  const Matrix<T> hidden = encode(params, batch.tokens, options, grads ? &encoder_trace : nullptr);
  Matrix<T> selected(static_cast<Eigen::Index>(batch.target_rows.size()), hidden.cols());
  for (std::size_t k = 0; k < batch.target_rows.size(); ++k) {
    const auto r = static_cast<Eigen::Index>(batch.target_rows[k]);
    if (r >= hidden.rows()) throw RangeError("target row " + std::to_string(r) + " out of range");
    selected.row(static_cast<Eigen::Index>(k)) = hidden.row(r);
  }
  HeadTrace<T> head_trace;
  const Matrix<T> logits = mlm_head(params, selected, grads ? &head_trace : nullptr);
  std::vector<std::size_t> rows(batch.target_rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = k;
  const auto result = mlm_loss<T>(logits, rows, batch.target_ids);
  if (grads) {
    const Matrix<T> dselected = head_backward(params, head_trace, result.logit_grad, *grads);
    Matrix<T> dhidden = Matrix<T>::Zero(hidden.rows(), hidden.cols());
    for (std::size_t k = 0; k < batch.target_rows.size(); ++k) {
      dhidden.row(static_cast<Eigen::Index>(batch.target_rows[k])) +=
          dselected.row(static_cast<Eigen::Index>(k));
    }
    encoder_backward(params, encoder_trace, dhidden, *grads);
  }
  return result.loss;
}

template float mlm_gradients(const Parameters<float>&, const MlmBatch&, const ForwardOptions&,
                             Parameters<float>*);
template double mlm_gradients(const Parameters<double>&, const MlmBatch&, const ForwardOptions&,
                              Parameters<double>*);
template long double mlm_gradients(const Parameters<long double>&, const MlmBatch&,
                                   const ForwardOptions&, Parameters<long double>*);

std::vector<std::vector<std::size_t>> plan_batches(std::span<const std::size_t> lengths,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch) {
  if (batch_size < 1) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(lengths.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng{seed, epoch, 0xBA7C};
  rng.shuffle(order.begin(), order.end());

  // Sort inside pools of 50 batches so batches hold similar lengths while
  // their composition still varies per epoch.
  const std::size_t pool = 50 * batch_size;
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const auto end = std::min(order.size(), start + pool);
    std::stable_sort(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::size_t a, std::size_t b) { return lengths[a] < lengths[b]; });
    for (std::size_t b = start; b < end; b += batch_size) {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                           order.begin() + static_cast<std::ptrdiff_t>(std::min(end, b + batch_size)));
    }
  }
  rng.shuffle(batches.begin(), batches.end());
  return batches;
}

double clip_gradients(Parameters<float>& grads, double max_norm) {
  double sq = 0.0;
  grads.for_each([&](std::string_view, const Matrix<float>& m) {
    sq += m.cast<double>().squaredNorm();
  });
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const auto scale = static_cast<float>(max_norm / norm);
    grads.for_each([&](std::string_view, Matrix<float>& m) { m *= scale; });
  }
  return norm;
}

TensorRefs collect_tensors(Parameters<float>& params, const Parameters<float>& grads,
                           const std::function<bool(std::string_view)>& select) {
  TensorRefs refs;
  params.for_each([&](std::string_view name, Matrix<float>& m) {
    if (select && !select(name)) return;
    refs.params.push_back(&m);
    refs.names.emplace_back(name);
  });
  std::size_t k = 0;
  grads.for_each([&](std::string_view name, const Matrix<float>& m) {
    if (k < refs.names.size() && refs.names[k] == name) {
      refs.grads.push_back(&m);
      ++k;
    }
  });
  if (refs.grads.size() != refs.params.size()) {
    throw ConfigError("gradient tensors do not mirror parameter tensors");
  }
  return refs;
}

TrainingExample make_masked_example(const VocabMap& vocab, std::u32string_view text,
                                    double mask_rate, Rng& rng) {
  TrainingExample e;
  e.input_ids = vocab.encode(text);
  const std::size_t n = text.size();
  if (n == 0) return e;
  const auto count = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(mask_rate * static_cast<double>(n))), 1, n);
  std::vector<std::size_t> positions(n);
  for (std::size_t i = 0; i < n; ++i) positions[i] = i + 1;
  // Partial Fisher-Yates: the first `count` entries become a uniform sample.
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(positions[i], positions[i + rng.uniform_index(n - i)]);
  }
  positions.resize(count);
  std::sort(positions.begin(), positions.end());
  for (auto p : positions) {
    e.target_positions.push_back(p);
    e.target_ids.push_back(e.input_ids[p]);
    e.input_ids[p] = special::kMask;
  }
  return e;
}

namespace {

std::uint64_t dropout_seed(std::uint64_t seed, std::size_t step) {
  return Rng{seed, step, 0xD0}.next_u64();
}

struct HeldOut {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Loss and argmax accuracy on masked positions; masks depend only on the seed
// and the sentence index.
HeldOut masked_eval(const Parameters<float>& params, const VocabMap& vocab,
                    std::span<const std::u32string> sentences, double mask_rate,
                    std::uint64_t seed) {
  constexpr std::size_t kBatch = 32;
  double loss_sum = 0.0;
  std::size_t total = 0, correct = 0;
  for (std::size_t start = 0; start < sentences.size(); start += kBatch) {
    const auto end = std::min(sentences.size(), start + kBatch);
    std::vector<TrainingExample> examples;
    for (std::size_t i = start; i < end; ++i) {
      if (sentences[i].empty()) continue;
      Rng rng{seed, i, 0x3A5C};
      examples.push_back(make_masked_example(vocab, sentences[i], mask_rate, rng));
    }
    if (examples.empty()) continue;
    const MlmBatch batch = make_mlm_batch(examples);
    const Matrix<float> hidden = encode(params, batch.tokens, ForwardOptions{});
    Matrix<float> selected(static_cast<Eigen::Index>(batch.target_rows.size()), hidden.cols());
    for (std::size_t k = 0; k < batch.target_rows.size(); ++k) {
      selected.row(static_cast<Eigen::Index>(k)) =
          hidden.row(static_cast<Eigen::Index>(batch.target_rows[k]));
    }
    const Matrix<double> logits = mlm_head(params, selected).cast<double>();
    std::vector<std::size_t> rows(batch.target_rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = k;
    loss_sum += mlm_loss<double>(logits, rows, batch.target_ids).loss * static_cast<double>(rows.size());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      Eigen::Index arg;
      logits.row(static_cast<Eigen::Index>(k)).maxCoeff(&arg);
      if (arg == batch.target_ids[k]) ++correct;
    }
    total += rows.size();
  }
  if (total == 0) return {};
  return {loss_sum / static_cast<double>(total),
          static_cast<double>(correct) / static_cast<double>(total)};
}

std::size_t total_steps(const TrainConfig& train, std::size_t batches_per_epoch) {
  return train.steps > 0 ? train.steps : train.epochs * batches_per_epoch;
}

bool eval_due(const TrainConfig& train, std::size_t step, std::size_t total,
              std::size_t batches_per_epoch) {
  if (step == total) return true;
  const std::size_t every = train.eval_every > 0 ? train.eval_every : batches_per_epoch;
  return every > 0 && step % every == 0;
}

}  // namespace

double masked_token_accuracy(const Parameters<float>& params, const VocabMap& vocab,
                             std::span<const std::u32string> sentences, double mask_rate,
                             std::uint64_t seed) {
  return masked_eval(params, vocab, sentences, mask_rate, seed).accuracy;
}

Parameters<float> pretrain_base(std::span<const std::u32string> corpus, const VocabMap& vocab,
                                const ModelConfig& config, const TrainConfig& train,
                                MetricsLog* log, std::span<const std::u32string> held_out) {
  train.validate();
  config.validate();
  if (config.vocab_size != vocab.size()) {
    throw ConfigError("model vocabulary size " + std::to_string(config.vocab_size) +
                      " does not match the vocabulary (" + std::to_string(vocab.size()) + ")");
  }
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (corpus[i].empty()) continue;
    if (corpus[i].size() + 2 > config.max_len) {
      throw RangeError("sentence " + std::to_string(i) + " is longer than the model accepts");
    }
    usable.push_back(i);
    lengths.push_back(corpus[i].size());
  }
  if (usable.empty()) throw ConfigError("pre-training corpus is empty");

  Parameters<float> params = init_random<float>(config);
  Adam<float> adam(train.adam());
  const std::size_t per_epoch = (usable.size() + train.batch_size - 1) / train.batch_size;
  const std::size_t total = total_steps(train, per_epoch);
  Rng mask_rng{train.seed, 0x9A5C};
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total; ++epoch) {
    for (const auto& members : plan_batches(lengths, train.batch_size, train.seed, epoch)) {
      if (step == total) break;
      std::vector<TrainingExample> examples;
      for (auto m : members) {
        examples.push_back(make_masked_example(vocab, corpus[usable[m]], train.mask_rate, mask_rng));
      }
      const MlmBatch batch = make_mlm_batch(examples);
      auto grads = Parameters<float>::zeros(config);
      const float loss = mlm_gradients<float>(params, batch, {true, dropout_seed(train.seed, step)}, &grads);
      clip_gradients(grads, train.clip_norm);
      auto refs = collect_tensors(params, grads);
      adam.step(refs.params, refs.grads, refs.names);
      ++step;
      if (log) log->append({step, "train", static_cast<double>(loss), std::nullopt});
      if (eval_due(train, step, total, per_epoch)) {
        std::string line = "pretrain step " + std::to_string(step) + "/" + std::to_string(total) +
                           " loss " + std::to_string(loss);
        if (!held_out.empty()) {
          const auto h = masked_eval(params, vocab, held_out, train.mask_rate, train.seed);
          if (log) log->append({step, "held_out", h.loss, h.accuracy});
          line += " held-out loss " + std::to_string(h.loss) + " acc " + std::to_string(h.accuracy);
        }
        log::info(line);
      }
    }
  }
  return params;
}

namespace {

struct PreparedCorpus {
  std::vector<TrainingExample> examples;
  std::vector<std::size_t> source;  // index into the caller's corpus
  std::vector<std::size_t> lengths;
  std::size_t skipped = 0;
};

PreparedCorpus prepare(std::span<const LabeledSentence> corpus, const VocabMap& vocab,
                       std::size_t max_len) {
  PreparedCorpus p;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const auto& s = corpus[i];
    if (s.labels.empty()) {
      ++p.skipped;
      continue;
    }
    if (s.text.size() + 2 > max_len) {
      throw RangeError("sentence " + std::to_string(i) + " has " + std::to_string(s.text.size()) +
                       " characters; the model accepts at most " + std::to_string(max_len - 2));
    }
    p.examples.push_back(make_example(vocab, s));
    p.source.push_back(i);
    p.lengths.push_back(s.text.size());
  }
  return p;
}

}  // namespace

double polyphone_loss(const Parameters<float>& params, const VocabMap& vocab,
                      std::span<const LabeledSentence> sentences) {
  const auto prepared = prepare(sentences, vocab, params.config.max_len);
  if (prepared.examples.empty()) throw ConfigError("no labeled polyphones to score");
  constexpr std::size_t kBatch = 64;
  double sum = 0.0;
  std::size_t count = 0;
  const std::span<const TrainingExample> all(prepared.examples);
  for (std::size_t start = 0; start < all.size(); start += kBatch) {
    const auto batch = make_mlm_batch(all.subspan(start, std::min(kBatch, all.size() - start)));
    const double loss = mlm_gradients<float>(params, batch, ForwardOptions{}, nullptr);
    sum += loss * static_cast<double>(batch.target_ids.size());
    count += batch.target_ids.size();
  }
  return sum / static_cast<double>(count);
}

std::vector<LabeledSentence> first_polyphone_batch(std::span<const LabeledSentence> corpus,
                                                   const VocabMap& vocab, const TrainConfig& train) {
  const auto prepared = prepare(corpus, vocab, std::numeric_limits<std::size_t>::max());
  if (prepared.examples.empty()) throw ConfigError("corpus has no labeled polyphones");
  const auto batches = plan_batches(prepared.lengths, train.batch_size, train.seed, 0);
  std::vector<LabeledSentence> out;
  for (auto m : batches.front()) out.push_back(corpus[prepared.source[m]]);
  return out;
}

PolyphoneTrainResult train_polyphone(std::span<const LabeledSentence> corpus,
                                     const VocabMap& vocab, Parameters<float> params,
                                     const TrainConfig& train,
                                     std::span<const LabeledSentence> dev,
                                     const CheckpointFn& on_checkpoint) {
  train.validate();
  if (params.config.vocab_size != vocab.size()) {
    throw ConfigError("parameters cover " + std::to_string(params.config.vocab_size) +
                      " tokens but the extended vocabulary has " + std::to_string(vocab.size()));
  }
  const auto prepared = prepare(corpus, vocab, params.config.max_len);
  if (prepared.examples.empty()) throw ConfigError("corpus has no labeled polyphones");
  if (prepared.skipped > 0) {
    log::warn("skipping " + std::to_string(prepared.skipped) + " sentences without polyphones");
  }
  std::vector<std::u32string> dev_texts;
  for (const auto& s : dev) dev_texts.push_back(s.text);

  PolyphoneTrainResult result{std::move(params), {}, prepared.skipped};
  auto& p = result.params;
  Adam<float> adam(train.adam());
  const std::size_t per_epoch = (prepared.examples.size() + train.batch_size - 1) / train.batch_size;
  const std::size_t total = total_steps(train, per_epoch);
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total; ++epoch) {
    for (const auto& members : plan_batches(prepared.lengths, train.batch_size, train.seed, epoch)) {
      if (step == total) break;
      std::vector<TrainingExample> examples;
      for (auto m : members) examples.push_back(prepared.examples[m]);
      const MlmBatch batch = make_mlm_batch(examples);
      auto grads = Parameters<float>::zeros(p.config);
      const float loss = mlm_gradients<float>(p, batch, {true, dropout_seed(train.seed, step)}, &grads);
      clip_gradients(grads, train.clip_norm);
      auto refs = collect_tensors(p, grads);
      adam.step(refs.params, refs.grads, refs.names);
      ++step;
      result.log.append({step, "train", static_cast<double>(loss), std::nullopt});
      if (eval_due(train, step, total, per_epoch)) {
        std::string line = "train step " + std::to_string(step) + "/" + std::to_string(total) +
                           " loss " + std::to_string(loss);
        if (!dev.empty()) {
          const double dev_loss = polyphone_loss(p, vocab, dev);
          const auto reports = predict_many(p, vocab, dev_texts);
          const auto scored = score("dev", reports, dev);
          result.log.append({step, "dev", dev_loss, scored.accuracy});
          line += " dev loss " + std::to_string(dev_loss) + " acc " + std::to_string(scored.accuracy);
        }
        log::info(line);
      }
      if (on_checkpoint && train.checkpoint_every > 0 && step % train.checkpoint_every == 0) {
        on_checkpoint(step, p);
      }
    }
  }
  return result;
}

}  // namespace pbg2p
