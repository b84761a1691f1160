#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pbg2p/adam.hpp"
#include "pbg2p/corpus.hpp"
#include "pbg2p/model.hpp"
#include "pbg2p/random.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

struct TrainConfig {
  double learning_rate = 5e-6;
  std::size_t batch_size = 64;
  // Total optimizer steps; 0 means `epochs` full passes over the corpus.
  std::size_t steps = 0;
  std::size_t epochs = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 0.0;  // global gradient norm clip, 0 disables
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 0;  // 0 disables
  std::size_t eval_every = 0;        // 0 means once per epoch
  double mask_rate = 0.15;           // base pre-training only

  void validate() const;
  AdamConfig adam() const { return {learning_rate, beta1, beta2, epsilon}; }
};

struct MetricRecord {
  std::size_t step;
  std::string split;
  double loss;
  std::optional<double> accuracy;
};

// Append-only list of evaluation points, written as JSON lines.
class MetricsLog {
 public:
  void append(MetricRecord record) { records_.push_back(std::move(record)); }
  const std::vector<MetricRecord>& records() const noexcept { return records_; }
  std::string to_jsonl() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::vector<MetricRecord> records_;
};

// A padded batch with targets; target_rows index rows of the padded layout.
struct MlmBatch {
  TokenBatch tokens;
  std::vector<std::size_t> target_rows;
  std::vector<TokenId> target_ids;
};

MlmBatch make_mlm_batch(std::span<const TrainingExample> examples);

// Masked-LM loss over the batch targets; the head runs only on target rows.
// Gradients are accumulated into *grads when it is non-null.
template <class T>
T mlm_gradients(const Parameters<T>& params, const MlmBatch& batch, const ForwardOptions& options,
                Parameters<T>* grads);

// Index batches for one epoch: shuffled, then grouped by similar length.
std::vector<std::vector<std::size_t>> plan_batches(std::span<const std::size_t> lengths,
                                                   std::size_t batch_size, std::uint64_t seed,
                                                   std::size_t epoch);

// Scales grads to the given global norm if it is larger; returns the norm.
double clip_gradients(Parameters<float>& grads, double max_norm);

// Standard masked-LM pre-training: mask_rate of the character positions (at
// least one per sentence) become [MASK] and are predicted. Starts from
// init_random(config); config.vocab_size must equal vocab.size().
Parameters<float> pretrain_base(std::span<const std::u32string> corpus, const VocabMap& vocab,
                                const ModelConfig& config, const TrainConfig& train,
                                MetricsLog* log = nullptr,
                                std::span<const std::u32string> held_out = {});

// Accuracy of argmax predictions at positions masked with the given seed.
double masked_token_accuracy(const Parameters<float>& params, const VocabMap& vocab,
                             std::span<const std::u32string> sentences, double mask_rate,
                             std::uint64_t seed);

// Example with masked_rate of character positions replaced by [MASK].
TrainingExample make_masked_example(const VocabMap& vocab, std::u32string_view text,
                                    double mask_rate, Rng& rng);

using CheckpointFn = std::function<void(std::size_t step, const Parameters<float>&)>;

struct PolyphoneTrainResult {
  Parameters<float> params;
  MetricsLog log;
  std::size_t skipped_sentences = 0;
};

// Polyphone training: inputs are the plain sentences, targets the NCMCs of
// every labeled polyphone. Sentences without polyphones are skipped with a
// warning; a corpus without any labeled polyphone throws ConfigError.
PolyphoneTrainResult train_polyphone(std::span<const LabeledSentence> corpus,
                                     const VocabMap& vocab, Parameters<float> params,
                                     const TrainConfig& train,
                                     std::span<const LabeledSentence> dev = {},
                                     const CheckpointFn& on_checkpoint = {});

// Mean polyphone loss in eval mode.
double polyphone_loss(const Parameters<float>& params, const VocabMap& vocab,
                      std::span<const LabeledSentence> sentences);

// The sentences train_polyphone would put in its first batch.
std::vector<LabeledSentence> first_polyphone_batch(std::span<const LabeledSentence> corpus,
                                                   const VocabMap& vocab, const TrainConfig& train);

// Parameter and gradient pointer lists for Adam, optionally restricted by name.
struct TensorRefs {
  std::vector<Matrix<float>*> params;
  std::vector<const Matrix<float>*> grads;
  std::vector<std::string> names;
};
TensorRefs collect_tensors(Parameters<float>& params, const Parameters<float>& grads,
                           const std::function<bool(std::string_view)>& select = {});

}  // namespace pbg2p
