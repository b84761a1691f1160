#include "pbg2p/baseline.hpp"

#include <algorithm>
#include <set>

#include "pbg2p/activation.hpp"
#include "pbg2p/errors.hpp"
#include "pbg2p/eval.hpp"
#include "pbg2p/log.hpp"
#include "pbg2p/loss.hpp"
#include "pbg2p/random.hpp"

namespace pbg2p {

std::vector<Pinyin> global_label_set(const Lexicon& lexicon) {
  std::vector<Pinyin> labels;
  std::set<Pinyin> seen;
  for (const auto& [c, entry] : lexicon.entries()) {
    for (const auto& r : entry.readings) {
      if (seen.insert(r).second) labels.push_back(r);
    }
  }
  return labels;
}

std::size_t ClassifierHead::label_index(const Pinyin& p) const {
  const auto it = std::find(labels.begin(), labels.end(), p);
  if (it == labels.end()) throw LookupError("pinyin " + p.str() + " is not in the label set");
  return static_cast<std::size_t>(it - labels.begin());
}

ClassifierHead init_classifier_head(std::size_t d_model, const Lexicon& lexicon,
                                    std::size_t hidden, double dropout, std::uint64_t seed) {
  if (hidden == 0) throw ConfigError("classifier hidden size must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("classifier dropout must lie in [0, 1)");
  ClassifierHead h;
  h.labels = global_label_set(lexicon);
  if (h.labels.empty()) throw ConfigError("lexicon has no polyphones");
  h.dropout = dropout;
  const auto d = static_cast<Eigen::Index>(d_model);
  const auto hh = static_cast<Eigen::Index>(hidden);
  const auto k = static_cast<Eigen::Index>(h.labels.size());
  Rng rng{seed, 0xC1A5};
  h.fc1_w = Matrix<float>(d, hh);
  for (Eigen::Index i = 0; i < h.fc1_w.size(); ++i) h.fc1_w.data()[i] = static_cast<float>(rng.normal(0.0, 0.02));
  h.fc1_b = Matrix<float>::Zero(1, hh);
  h.fc2_w = Matrix<float>(hh, k);
  for (Eigen::Index i = 0; i < h.fc2_w.size(); ++i) h.fc2_w.data()[i] = static_cast<float>(rng.normal(0.0, 0.02));
  h.fc2_b = Matrix<float>::Zero(1, k);
  return h;
}

Matrix<float> classifier_logits(const ClassifierHead& head, const Matrix<float>& hidden) {
  Matrix<float> a = hidden * head.fc1_w;
  a.rowwise() += head.fc1_b.row(0);
  a = a.unaryExpr([](float v) { return gelu(v); });
  Matrix<float> logits = a * head.fc2_w;
  logits.rowwise() += head.fc2_b.row(0);
  return logits;
}

namespace {

void check_head(const Parameters<float>& encoder, const ClassifierHead& head) {
  if (static_cast<std::size_t>(head.fc1_w.rows()) != encoder.config.d_model ||
      head.fc1_b.cols() != head.fc1_w.cols() || head.fc2_w.rows() != head.fc1_w.cols() ||
      static_cast<std::size_t>(head.fc2_w.cols()) != head.labels.size() ||
      head.fc2_b.cols() != head.fc2_w.cols()) {
    throw ConfigError("classifier head does not fit the encoder");
  }
}

struct Item {
  std::vector<TokenId> ids;
  std::vector<std::size_t> positions;
  std::vector<TokenId> labels;
};

struct Prepared {
  std::vector<Item> items;
  std::vector<std::size_t> lengths;
  std::size_t skipped = 0;
};

Prepared prepare(std::span<const LabeledSentence> corpus, const VocabMap& vocab,
                 const Lexicon& lexicon, const ClassifierHead& head, std::size_t max_len) {
  Prepared p;
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
    Item item{vocab.encode(std::u32string_view(s.text)), {}, {}};
    for (const auto& label : s.labels) {
      if (label.index >= s.text.size()) {
        throw LabelError("label outside the sentence", label.index);
      }
      const auto* entry = lexicon.find(s.text[label.index]);
      if (!entry) throw LabelError("labeled character is not a polyphone", label.index);
      if (std::find(entry->readings.begin(), entry->readings.end(), label.pinyin) ==
          entry->readings.end()) {
        throw LabelError("reading " + label.pinyin.str() + " is not listed for this character",
                         label.index);
      }
      item.positions.push_back(label.index + 1);
      item.labels.push_back(static_cast<TokenId>(head.label_index(label.pinyin)));
    }
    p.items.push_back(std::move(item));
    p.lengths.push_back(s.text.size());
  }
  return p;
}

struct Batch {
  TokenBatch tokens;
  std::vector<std::size_t> rows;
  std::vector<TokenId> labels;
};

Batch make_batch(const Prepared& p, std::span<const std::size_t> members) {
  std::vector<std::vector<TokenId>> seqs;
  for (auto m : members) seqs.push_back(p.items[m].ids);
  Batch b{TokenBatch::pad(seqs), {}, {}};
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto& item = p.items[members[k]];
    for (std::size_t j = 0; j < item.positions.size(); ++j) {
      b.rows.push_back(k * b.tokens.length + item.positions[j]);
      b.labels.push_back(item.labels[j]);
    }
  }
  return b;
}

Matrix<float> gather(const Matrix<float>& hidden, std::span<const std::size_t> rows) {
  Matrix<float> out(static_cast<Eigen::Index>(rows.size()), hidden.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.row(static_cast<Eigen::Index>(k)) = hidden.row(static_cast<Eigen::Index>(rows[k]));
  }
  return out;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace

std::vector<PredictionReport> classify_many(const Parameters<float>& encoder,
                                            const ClassifierHead& head, const VocabMap& vocab,
                                            const Lexicon& lexicon,
                                            std::span<const std::u32string> texts,
                                            std::size_t batch_size) {
  check_head(encoder, head);
  std::vector<PredictionReport> reports;
  reports.reserve(texts.size());
  batch_size = std::max<std::size_t>(batch_size, 1);
  for (std::size_t start = 0; start < texts.size(); start += batch_size) {
    const auto end = std::min(texts.size(), start + batch_size);
    std::vector<std::vector<TokenId>> seqs;
    for (std::size_t i = start; i < end; ++i) {
      if (texts[i].size() + 2 > encoder.config.max_len) {
        throw RangeError("sentence " + std::to_string(i) + " has " + std::to_string(texts[i].size()) +
                         " characters; the model accepts at most " +
                         std::to_string(encoder.config.max_len - 2));
      }
      seqs.push_back(vocab.encode(std::u32string_view(texts[i])));
    }
    const TokenBatch batch = TokenBatch::pad(seqs);
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < end; ++i) {
      for (std::size_t c = 0; c < texts[i].size(); ++c) {
        if (lexicon.is_polyphone(texts[i][c])) rows.push_back((i - start) * batch.length + c + 1);
      }
    }
    Matrix<double> probs;
    if (!rows.empty()) {
      const Matrix<float> hidden = encode(encoder, batch, ForwardOptions{});
      probs = softmax_rows(classifier_logits(head, gather(hidden, rows)).cast<double>());
    }
    std::size_t k = 0;
    for (std::size_t i = start; i < end; ++i) {
      PredictionReport report{texts[i], {}};
      for (std::size_t c = 0; c < texts[i].size(); ++c) {
        const auto* entry = lexicon.find(texts[i][c]);
        if (!entry) continue;
        std::vector<CandidateProbability> raw;
        for (const auto& r : entry->readings) {
          raw.push_back({r, probs(static_cast<Eigen::Index>(k),
                                  static_cast<Eigen::Index>(head.label_index(r)))});
        }
        report.predictions.push_back(decide(c, texts[i][c], std::move(raw)));
        ++k;
      }
      reports.push_back(std::move(report));
    }
  }
  return reports;
}

PredictionReport classify(const Parameters<float>& encoder, const ClassifierHead& head,
                          const VocabMap& vocab, const Lexicon& lexicon, std::u32string_view text) {
  const std::u32string owned(text);
  return std::move(classify_many(encoder, head, vocab, lexicon, std::span(&owned, 1)).front());
}

double classifier_loss(const Parameters<float>& encoder, const ClassifierHead& head,
                       const VocabMap& vocab, const Lexicon& lexicon,
                       std::span<const LabeledSentence> sentences) {
  check_head(encoder, head);
  const auto p = prepare(sentences, vocab, lexicon, head, encoder.config.max_len);
  if (p.items.empty()) throw ConfigError("no labeled polyphones to score");
  constexpr std::size_t kBatch = 64;
  const auto all = iota(p.items.size());
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < all.size(); start += kBatch) {
    const auto members = std::span(all).subspan(start, std::min(kBatch, all.size() - start));
    const auto b = make_batch(p, members);
    const Matrix<float> hidden = encode(encoder, b.tokens, ForwardOptions{});
    const Matrix<float> logits = classifier_logits(head, gather(hidden, b.rows));
    const auto loss = mlm_loss<float>(logits, iota(b.rows.size()), b.labels).loss;
    sum += static_cast<double>(loss) * static_cast<double>(b.rows.size());
    count += b.rows.size();
  }
  return sum / static_cast<double>(count);
}

ClassifierTrainResult train_classifier(std::span<const LabeledSentence> corpus,
                                       const VocabMap& vocab, const Lexicon& lexicon,
                                       Parameters<float> encoder, ClassifierHead head, bool freeze,
                                       const TrainConfig& train,
                                       std::span<const LabeledSentence> dev) {
  train.validate();
  check_head(encoder, head);
  if (encoder.config.vocab_size != vocab.size()) {
    throw ConfigError("encoder covers " + std::to_string(encoder.config.vocab_size) +
                      " tokens but the vocabulary has " + std::to_string(vocab.size()));
  }
  const auto prepared = prepare(corpus, vocab, lexicon, head, encoder.config.max_len);
  if (prepared.items.empty()) throw ConfigError("corpus has no labeled polyphones");
  if (prepared.skipped > 0) {
    log::warn("skipping " + std::to_string(prepared.skipped) + " sentences without polyphones");
  }
  std::vector<std::u32string> dev_texts;
  for (const auto& s : dev) dev_texts.push_back(s.text);

  ClassifierTrainResult result{std::move(encoder), std::move(head), {}, prepared.skipped};
  auto& enc = result.encoder;
  auto& h = result.head;
  Adam<float> head_adam(train.adam());
  Adam<float> encoder_adam(train.adam());
  const std::size_t per_epoch = (prepared.items.size() + train.batch_size - 1) / train.batch_size;
  const std::size_t total = train.steps > 0 ? train.steps : train.epochs * per_epoch;
  const std::size_t eval_every = train.eval_every > 0 ? train.eval_every : per_epoch;
  std::size_t step = 0;
  for (std::size_t epoch = 0; step < total; ++epoch) {
    for (const auto& members : plan_batches(prepared.lengths, train.batch_size, train.seed, epoch)) {
      if (step == total) break;
      const auto b = make_batch(prepared, members);
      const ForwardOptions options{!freeze, Rng{train.seed, step, 0xD0}.next_u64()};
      EncoderTrace<float> trace;
      const Matrix<float> hidden = encode(enc, b.tokens, options, freeze ? nullptr : &trace);
      const Matrix<float> x = gather(hidden, b.rows);

      Matrix<float> pre = x * h.fc1_w;
      pre.rowwise() += h.fc1_b.row(0);
      Matrix<float> act = pre.unaryExpr([](float v) { return gelu(v); });
      Rng drop_rng{train.seed, step, 0xC1D0};
      const Matrix<float> keep =
          h.dropout > 0.0 ? dropout_keep<float>(drop_rng, act.rows(), act.cols(), h.dropout)
                          : Matrix<float>::Ones(act.rows(), act.cols());
      act.array() *= keep.array();
      Matrix<float> logits = act * h.fc2_w;
      logits.rowwise() += h.fc2_b.row(0);
      const auto lr = mlm_loss<float>(logits, iota(b.rows.size()), b.labels);

      ClassifierHead g{h.labels, h.dropout, Matrix<float>::Zero(h.fc1_w.rows(), h.fc1_w.cols()),
                       Matrix<float>::Zero(1, h.fc1_b.cols()),
                       Matrix<float>::Zero(h.fc2_w.rows(), h.fc2_w.cols()),
                       Matrix<float>::Zero(1, h.fc2_b.cols())};
      g.fc2_w.noalias() = act.transpose() * lr.logit_grad;
      g.fc2_b.row(0) = lr.logit_grad.colwise().sum();
      Matrix<float> dpre = lr.logit_grad * h.fc2_w.transpose();
      dpre.array() *= keep.array();
      dpre.array() *= pre.unaryExpr([](float v) { return gelu_grad(v); }).array();
      g.fc1_w.noalias() = x.transpose() * dpre;
      g.fc1_b.row(0) = dpre.colwise().sum();

      if (!freeze) {
        const Matrix<float> dx = dpre * h.fc1_w.transpose();
        Matrix<float> dhidden = Matrix<float>::Zero(hidden.rows(), hidden.cols());
        for (std::size_t k = 0; k < b.rows.size(); ++k) {
          dhidden.row(static_cast<Eigen::Index>(b.rows[k])) += dx.row(static_cast<Eigen::Index>(k));
        }
        auto grads = Parameters<float>::zeros(enc.config);
        encoder_backward(enc, trace, dhidden, grads);
        // The MLM head of the encoder is not part of this model.
        auto refs = collect_tensors(enc, grads, is_encoder_tensor);
        encoder_adam.step(refs.params, refs.grads, refs.names);
      }
      std::vector<Matrix<float>*> hp;
      std::vector<const Matrix<float>*> hg;
      std::vector<std::string> hn;
      h.for_each([&](std::string_view name, Matrix<float>& m) {
        hp.push_back(&m);
        hn.emplace_back(name);
      });
      g.for_each([&](std::string_view, const Matrix<float>& m) { hg.push_back(&m); });
      head_adam.step(hp, hg, hn);

      ++step;
      result.log.append({step, "train", static_cast<double>(lr.loss), std::nullopt});
      if (step == total || step % eval_every == 0) {
        std::string line = "baseline step " + std::to_string(step) + "/" + std::to_string(total) +
                           " loss " + std::to_string(lr.loss);
        if (!dev.empty()) {
          const double dev_loss = classifier_loss(enc, h, vocab, lexicon, dev);
          const auto scored = score("dev", classify_many(enc, h, vocab, lexicon, dev_texts), dev);
          result.log.append({step, "dev", dev_loss, scored.accuracy});
          line += " dev loss " + std::to_string(dev_loss) + " acc " + std::to_string(scored.accuracy);
        }
        log::info(line);
      }
    }
  }
  return result;
}

void save_baseline(const std::filesystem::path& path, const Parameters<float>& encoder,
                   const VocabMap& vocab, const Lexicon& lexicon, const ClassifierHead& head) {
  check_head(encoder, head);
  if (encoder.config.vocab_size != vocab.size() || vocab.ncmc_count() != 0) {
    throw ConfigError("the baseline encoder runs over the base vocabulary");
  }
  if (head.labels != global_label_set(lexicon)) {
    throw ConfigError("classifier labels do not match the lexicon");
  }
  Checkpoint ckpt;
  ckpt.config = encoder.config;
  ckpt.base_tokens = vocab.base_tokens();
  for (const auto& [c, entry] : lexicon.entries()) ckpt.ncmc_lexicon.add_entry(entry);
  encoder.for_each([&](std::string_view name, const Matrix<float>& m) {
    ckpt.tensors.push_back({std::string(name), m});
  });
  head.for_each([&](std::string_view name, const Matrix<float>& m) {
    ckpt.tensors.push_back({std::string(name), m});
  });
  write_checkpoint(path, ckpt);
}

bool is_baseline(const Checkpoint& ckpt) {
  return std::any_of(ckpt.tensors.begin(), ckpt.tensors.end(),
                     [](const NamedTensor& t) { return t.name.starts_with("classifier."); });
}

LoadedBaseline baseline_from(Checkpoint ckpt) {
  if (!is_baseline(ckpt)) throw FormatError("checkpoint has no classifier head");
  auto vocab = VocabMap::build(ckpt.base_tokens, Lexicon{});
  if (vocab.size() != ckpt.config.vocab_size) {
    throw FormatError("vocabulary block does not match the configured vocab size");
  }
  std::vector<NamedTensor> extras;
  auto encoder = parameters_from(ckpt.config, std::move(ckpt.tensors), &extras);
  LoadedBaseline out{std::move(encoder), std::move(vocab), std::move(ckpt.ncmc_lexicon), {}};
  out.head.labels = global_label_set(out.lexicon);
  std::size_t found = 0;
  for (auto& t : extras) {
    out.head.for_each([&](std::string_view name, Matrix<float>& m) {
      if (t.name == name) {
        m = std::move(t.value);
        ++found;
      }
    });
  }
  if (found != 4) throw FormatError("checkpoint has an incomplete classifier head");
  try {
    check_head(out.encoder, out.head);
  } catch (const ConfigError& e) {
    throw FormatError(e.what());
  }
  return out;
}

LoadedBaseline load_baseline(const std::filesystem::path& path) {
  return baseline_from(read_checkpoint(path));
}

}  // namespace pbg2p
