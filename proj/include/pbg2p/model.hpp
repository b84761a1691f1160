#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pbg2p/tensor.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t d_ff = 512;
  std::size_t max_len = 32;
  double dropout = 0.1;
  std::uint64_t seed = 1;

  // Throws ConfigError.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <class T>
struct LayerParameters {
  Matrix<T> query_w, query_b;
  Matrix<T> key_w, key_b;
  Matrix<T> value_w, value_b;
  Matrix<T> attn_out_w, attn_out_b;
  Matrix<T> attn_norm_gain, attn_norm_bias;
  Matrix<T> ffn_in_w, ffn_in_b;
  Matrix<T> ffn_out_w, ffn_out_b;
  Matrix<T> ffn_norm_gain, ffn_norm_bias;
};

// Post-layer-norm transformer encoder with a masked-LM head. The head has no
// output matrix of its own: logits are transform(h) . token_embedding^T plus
// output_bias, so the token embedding is the only V x d tensor.
template <class T>
struct Parameters {
  ModelConfig config;
  Matrix<T> token_embedding;     // V x d
  Matrix<T> position_embedding;  // L x d
  std::vector<LayerParameters<T>> layers;
  Matrix<T> head_transform_w, head_transform_b;
  Matrix<T> head_norm_gain, head_norm_bias;
  Matrix<T> output_bias;  // 1 x V

  // Correctly shaped, all zero.
  static Parameters zeros(const ModelConfig& config);

  // fn(name, tensor) over every tensor in a fixed order.
  template <class Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

  template <class U>
  Parameters<U> cast() const;

 private:
  template <class Self, class Fn>
  static void visit(Self& self, Fn& fn);
};

// Names of encoder tensors start with "embeddings." or "layer."; the MLM head
// tensors start with "head.".
bool is_encoder_tensor(std::string_view name);

std::uint64_t param_count(const ModelConfig& config);
template <class T>
std::uint64_t param_count(const Parameters<T>& params);
// Parameters added by n new tokens at width d: one embedding row and one
// output bias each.
std::uint64_t extension_delta(std::uint64_t n, std::uint64_t d);

// N(0, 0.02) weights, unit gains, zero biases; a pure function of config.seed.
template <class T>
Parameters<T> init_random(const ModelConfig& config);

enum class InitMode { scpc, unk };

// Grows the embedding and output bias by one row per NCMC of extended_vocab,
// copying the row and bias of the NCMC's own character (scpc) or of [UNK].
// Every other tensor is copied unchanged.
template <class T>
Parameters<T> extend_and_init(const Parameters<T>& base, const VocabMap& base_vocab,
                              const VocabMap& extended_vocab, InitMode mode);

// Sequences padded with [PAD] to a common length. Row r of every activation
// and logit matrix is position r % length of sequence r / length.
struct TokenBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::vector<TokenId> ids;

  static TokenBatch pad(std::span<const std::vector<TokenId>> sequences);
  TokenId at(std::size_t b, std::size_t t) const { return ids[b * length + t]; }
  std::size_t rows() const noexcept { return batch * length; }
};

struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;
};

template <class T>
struct NormCache {
  Matrix<T> normalized;
  Matrix<T> inv_std;  // rows x 1
};

template <class T>
struct LayerTrace {
  Matrix<T> input;
  Matrix<T> query, key, value;
  std::vector<Matrix<T>> probs;       // per (sequence, head), before dropout
  std::vector<Matrix<T>> probs_keep;  // matching dropout scales; empty when off
  Matrix<T> context;
  NormCache<T> attn_norm;
  Matrix<T> attn_normed;
  Matrix<T> ffn_pre, ffn_act;
  Matrix<T> ffn_keep;
  NormCache<T> ffn_norm;
};

template <class T>
struct EncoderTrace {
  TokenBatch batch;
  ForwardOptions options;
  Matrix<T> embedding_keep;
  std::vector<LayerTrace<T>> layers;
};

template <class T>
struct HeadTrace {
  Matrix<T> hidden;
  Matrix<T> pre, act;
  NormCache<T> norm;
  // Set when the head projected onto a matrix other than the token embedding.
  const Matrix<T>* output_weights = nullptr;
};

template <class T>
struct ForwardTrace {
  EncoderTrace<T> encoder;
  HeadTrace<T> head;
};

// Final hidden states, rows() x d. Keys at [PAD] positions are masked out of
// attention. Throws RangeError on unknown ids or sequences longer than max_len.
template <class T>
Matrix<T> encode(const Parameters<T>& params, const TokenBatch& batch,
                 const ForwardOptions& options, EncoderTrace<T>* trace = nullptr);

// MLM logits for each hidden row, n x V. output_weights replaces the tied
// token embedding as projection; it exists only to check the tied gradient.
template <class T>
Matrix<T> mlm_head(const Parameters<T>& params, const Matrix<T>& hidden,
                   HeadTrace<T>* trace = nullptr, const Matrix<T>* output_weights = nullptr);

// encode followed by mlm_head on every row: rows() x V.
template <class T>
Matrix<T> forward(const Parameters<T>& params, const TokenBatch& batch,
                  const ForwardOptions& options, ForwardTrace<T>* trace = nullptr);

// Recomputes the logits recorded by a trace.
template <class T>
Matrix<T> replay(const Parameters<T>& params, const ForwardTrace<T>& trace);

// Backward passes accumulate into grads. head_backward returns the gradient
// with respect to its hidden input; when the trace is untied the output-path
// gradient goes to output_weights_grad instead of grads.token_embedding.
template <class T>
Matrix<T> head_backward(const Parameters<T>& params, const HeadTrace<T>& trace,
                        const Matrix<T>& logit_grad, Parameters<T>& grads,
                        Matrix<T>* output_weights_grad = nullptr);

template <class T>
void encoder_backward(const Parameters<T>& params, const EncoderTrace<T>& trace,
                      const Matrix<T>& hidden_grad, Parameters<T>& grads);

template <class T>
void backward(const Parameters<T>& params, const ForwardTrace<T>& trace,
              const Matrix<T>& logit_grad, Parameters<T>& grads);

template <class T>
bool all_finite(const Parameters<T>& params);

// Implementation of the member templates.

template <class T>
template <class Self, class Fn>
void Parameters<T>::visit(Self& self, Fn& fn) {
  fn(std::string_view("embeddings.token"), self.token_embedding);
  fn(std::string_view("embeddings.position"), self.position_embedding);
  for (std::size_t i = 0; i < self.layers.size(); ++i) {
    auto& l = self.layers[i];
    const std::string p = "layer." + std::to_string(i) + ".";
    fn(std::string_view(p + "attention.query.weight"), l.query_w);
    fn(std::string_view(p + "attention.query.bias"), l.query_b);
    fn(std::string_view(p + "attention.key.weight"), l.key_w);
    fn(std::string_view(p + "attention.key.bias"), l.key_b);
    fn(std::string_view(p + "attention.value.weight"), l.value_w);
    fn(std::string_view(p + "attention.value.bias"), l.value_b);
    fn(std::string_view(p + "attention.output.weight"), l.attn_out_w);
    fn(std::string_view(p + "attention.output.bias"), l.attn_out_b);
    fn(std::string_view(p + "attention.norm.gain"), l.attn_norm_gain);
    fn(std::string_view(p + "attention.norm.bias"), l.attn_norm_bias);
    fn(std::string_view(p + "ffn.input.weight"), l.ffn_in_w);
    fn(std::string_view(p + "ffn.input.bias"), l.ffn_in_b);
    fn(std::string_view(p + "ffn.output.weight"), l.ffn_out_w);
    fn(std::string_view(p + "ffn.output.bias"), l.ffn_out_b);
    fn(std::string_view(p + "ffn.norm.gain"), l.ffn_norm_gain);
    fn(std::string_view(p + "ffn.norm.bias"), l.ffn_norm_bias);
  }
  fn(std::string_view("head.transform.weight"), self.head_transform_w);
  fn(std::string_view("head.transform.bias"), self.head_transform_b);
  fn(std::string_view("head.norm.gain"), self.head_norm_gain);
  fn(std::string_view("head.norm.bias"), self.head_norm_bias);
  fn(std::string_view("head.output_bias"), self.output_bias);
}

template <class T>
template <class U>
Parameters<U> Parameters<T>::cast() const {
  Parameters<U> out = Parameters<U>::zeros(config);
  std::vector<const Matrix<T>*> src;
  for_each([&](std::string_view, const Matrix<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  out.for_each([&](std::string_view, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
  return out;
}

}  // namespace pbg2p
