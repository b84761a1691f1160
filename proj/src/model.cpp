#include "pbg2p/model.hpp"

#include <cmath>
#include <limits>

#include "pbg2p/activation.hpp"
#include "pbg2p/errors.hpp"
#include "pbg2p/random.hpp"

namespace pbg2p {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kNormEps = 1e-12;

template <class T>
Matrix<T> zeros(std::size_t rows, std::size_t cols) {
  return Matrix<T>::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

template <class T>
void add_bias(Matrix<T>& m, const Matrix<T>& bias) {
  m.rowwise() += bias.row(0);
}

template <class T>
Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
  Matrix<T> y = x * w;
  add_bias(y, b);
  return y;
}

template <class T>
Matrix<T> layer_norm(const Matrix<T>& x, const Matrix<T>& gain, const Matrix<T>& bias,
                     NormCache<T>& cache) {
  const auto n = x.cols();
  cache.normalized.resize(x.rows(), n);
  cache.inv_std.resize(x.rows(), 1);
  Matrix<T> y(x.rows(), n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().mean();
    const T inv = T(1) / std::sqrt(var + T(kNormEps));
    cache.inv_std(r, 0) = inv;
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
    y.row(r) = cache.normalized.row(r).cwiseProduct(gain.row(0)) + bias.row(0);
  }
  return y;
}

template <class T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& gain, const NormCache<T>& cache,
                              Matrix<T>& dgain, Matrix<T>& dbias) {
  dgain.row(0) += dy.cwiseProduct(cache.normalized).colwise().sum();
  dbias.row(0) += dy.colwise().sum();
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const auto dxhat = dy.row(r).cwiseProduct(gain.row(0));
    const T mean_dxhat = dxhat.mean();
    const T mean_dxhat_xhat = dxhat.cwiseProduct(cache.normalized.row(r)).mean();
    dx.row(r) = cache.inv_std(r, 0) *
                (dxhat.array() - mean_dxhat - cache.normalized.row(r).array() * mean_dxhat_xhat)
                    .matrix();
  }
  return dx;
}

template <class T>
Matrix<T> project_rows(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& bias) {
  const auto n = x.rows();
  const auto v = w.rows();
  const auto d = x.cols();
  Matrix<T> out(n, v);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T* a = x.row(i).data();
    for (Eigen::Index j = 0; j < v; ++j) {
      const T* e = w.row(j).data();
      T s = T(0);
      for (Eigen::Index k = 0; k < d; ++k) s += a[k] * e[k];
      out(i, j) = s + bias(0, j);
    }
  }
  return out;
}

void check_shape(bool ok, const std::string& what) {
  if (!ok) throw ConfigError("shape mismatch: " + what);
}

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < special::kCount) throw ConfigError("vocab_size smaller than the special tokens");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model must be a positive multiple of n_heads");
  }
  if (d_ff == 0) throw ConfigError("d_ff must be positive");
  if (max_len < 2) throw ConfigError("max_len must fit [CLS] and [SEP]");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
}

bool is_encoder_tensor(std::string_view name) {
  return name.starts_with("embeddings.") || name.starts_with("layer.");
}

template <class T>
Parameters<T> Parameters<T>::zeros(const ModelConfig& c) {
  using pbg2p::zeros;
  Parameters<T> p;
  p.config = c;
  const auto d = c.d_model;
  p.token_embedding = zeros<T>(c.vocab_size, d);
  p.position_embedding = zeros<T>(c.max_len, d);
  p.layers.resize(c.n_layers);
  for (auto& l : p.layers) {
    l.query_w = zeros<T>(d, d), l.query_b = zeros<T>(1, d);
    l.key_w = zeros<T>(d, d), l.key_b = zeros<T>(1, d);
    l.value_w = zeros<T>(d, d), l.value_b = zeros<T>(1, d);
    l.attn_out_w = zeros<T>(d, d), l.attn_out_b = zeros<T>(1, d);
    l.attn_norm_gain = zeros<T>(1, d), l.attn_norm_bias = zeros<T>(1, d);
    l.ffn_in_w = zeros<T>(d, c.d_ff), l.ffn_in_b = zeros<T>(1, c.d_ff);
    l.ffn_out_w = zeros<T>(c.d_ff, d), l.ffn_out_b = zeros<T>(1, d);
    l.ffn_norm_gain = zeros<T>(1, d), l.ffn_norm_bias = zeros<T>(1, d);
  }
  p.head_transform_w = zeros<T>(d, d);
  p.head_transform_b = zeros<T>(1, d);
  p.head_norm_gain = zeros<T>(1, d);
  p.head_norm_bias = zeros<T>(1, d);
  p.output_bias = zeros<T>(1, c.vocab_size);
  return p;
}

std::uint64_t param_count(const ModelConfig& c) {
  const std::uint64_t v = c.vocab_size, d = c.d_model, f = c.d_ff, l = c.max_len;
  const std::uint64_t per_layer = 4 * (d * d + d)  // q, k, v, output projections
                                  + (d * f + f)    // ffn in
                                  + (f * d + d)    // ffn out
                                  + 4 * d;         // two layer norms
  const std::uint64_t head = d * d + d + 2 * d + v;
  return v * d + l * d + c.n_layers * per_layer + head;
}

template <class T>
std::uint64_t param_count(const Parameters<T>& params) {
  std::uint64_t n = 0;
  params.for_each([&](std::string_view, const Matrix<T>& m) { n += static_cast<std::uint64_t>(m.size()); });
  return n;
}

std::uint64_t extension_delta(std::uint64_t n, std::uint64_t d) { return n * (d + 1); }

template <class T>
Parameters<T> init_random(const ModelConfig& config) {
  config.validate();
  Parameters<T> p = Parameters<T>::zeros(config);
  Rng rng{config.seed, 0x1417};
  p.for_each([&](std::string_view name, Matrix<T>& m) {
    if (name.ends_with(".gain")) {
      m.setOnes();
    } else if (name.ends_with(".weight") || name.starts_with("embeddings.")) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = T(rng.normal(0.0, kInitStd));
    }
  });
  return p;
}

template <class T>
Parameters<T> extend_and_init(const Parameters<T>& base, const VocabMap& base_vocab,
                              const VocabMap& extended_vocab, InitMode mode) {
  if (base_vocab.ncmc_count() != 0 || base.config.vocab_size != base_vocab.size() ||
      static_cast<std::size_t>(base.token_embedding.rows()) != base_vocab.size() ||
      extended_vocab.base_tokens() != base_vocab.base_tokens()) {
    throw ConfigError("size mismatch: base parameters, base vocabulary and extended vocabulary disagree");
  }
  Parameters<T> out = base;
  const auto v = static_cast<Eigen::Index>(extended_vocab.size());
  out.config.vocab_size = extended_vocab.size();
  out.token_embedding.conservativeResize(v, Eigen::NoChange);
  out.output_bias.conservativeResize(Eigen::NoChange, v);
  for (std::size_t i = 0; i < extended_vocab.ncmc_count(); ++i) {
    const auto& d = extended_vocab.ncmcs()[i];
    const TokenId source = mode == InitMode::scpc ? *extended_vocab.find_char(d.scpc) : special::kUnk;
    const auto row = static_cast<Eigen::Index>(base_vocab.size() + i);
    out.token_embedding.row(row) = base.token_embedding.row(source);
    out.output_bias(0, row) = base.output_bias(0, source);
  }
  return out;
}

TokenBatch TokenBatch::pad(std::span<const std::vector<TokenId>> sequences) {
  TokenBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) b.length = std::max(b.length, s.size());
  b.ids.assign(b.batch * b.length, special::kPad);
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    std::copy(sequences[i].begin(), sequences[i].end(), b.ids.begin() + static_cast<std::ptrdiff_t>(i * b.length));
  }
  return b;
}

template <class T>
Matrix<T> encode(const Parameters<T>& params, const TokenBatch& batch,
                 const ForwardOptions& options, EncoderTrace<T>* trace) {
  const auto& c = params.config;
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto heads = static_cast<Eigen::Index>(c.n_heads);
  const auto dh = d / heads;
  const auto len = static_cast<Eigen::Index>(batch.length);
  const auto rows = static_cast<Eigen::Index>(batch.rows());
  if (batch.length > c.max_len) {
    throw RangeError("sequence length " + std::to_string(batch.length) + " exceeds max_len " +
                     std::to_string(c.max_len));
  }
  const bool dropout = options.train && c.dropout > 0.0;
  Rng rng{options.dropout_seed, 0xD50F};
  const T scale = T(1) / std::sqrt(T(dh));

  Matrix<T> x(rows, d);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const TokenId id = batch.ids[static_cast<std::size_t>(r)];
    if (id < 0 || static_cast<std::size_t>(id) >= c.vocab_size) {
      throw RangeError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                       std::to_string(c.vocab_size));
    }
    x.row(r) = params.token_embedding.row(id) + params.position_embedding.row(r % len);
  }
  if (trace) {
    trace->batch = batch;
    trace->options = options;
    trace->layers.clear();
    trace->embedding_keep.resize(0, 0);
  }
  if (dropout) {
    Matrix<T> keep = dropout_keep<T>(rng, rows, d, c.dropout);
    x.array() *= keep.array();
    if (trace) trace->embedding_keep = std::move(keep);
  }

  for (const auto& layer : params.layers) {
    LayerTrace<T> local;
    LayerTrace<T>& lt = trace ? trace->layers.emplace_back() : local;
    lt.input = x;
    lt.query = affine(x, layer.query_w, layer.query_b);
    lt.key = affine(x, layer.key_w, layer.key_b);
    lt.value = affine(x, layer.value_w, layer.value_b);
    lt.context.resize(rows, d);
    lt.probs.clear();
    lt.probs_keep.clear();
    for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(batch.batch); ++b) {
      for (Eigen::Index h = 0; h < heads; ++h) {
        const auto q = lt.query.block(b * len, h * dh, len, dh);
        const auto k = lt.key.block(b * len, h * dh, len, dh);
        const auto v = lt.value.block(b * len, h * dh, len, dh);
        Matrix<T> s = (q * k.transpose()) * scale;
        for (Eigen::Index t = 0; t < len; ++t) {
          if (batch.at(static_cast<std::size_t>(b), static_cast<std::size_t>(t)) == special::kPad) {
            s.col(t).setConstant(-std::numeric_limits<T>::infinity());
          }
        }
        for (Eigen::Index i = 0; i < len; ++i) {
          const T m = s.row(i).maxCoeff();
          if (!std::isfinite(m)) {
            s.row(i).setZero();
            continue;
          }
          s.row(i) = (s.row(i).array() - m).exp().matrix();
          s.row(i) /= s.row(i).sum();
        }
        if (dropout) {
          Matrix<T> keep = dropout_keep<T>(rng, len, len, c.dropout);
          lt.context.block(b * len, h * dh, len, dh) = s.cwiseProduct(keep) * v;
          lt.probs_keep.push_back(std::move(keep));
        } else {
          lt.context.block(b * len, h * dh, len, dh) = s * v;
        }
        lt.probs.push_back(std::move(s));
      }
    }
    Matrix<T> r1 = affine(lt.context, layer.attn_out_w, layer.attn_out_b);
    r1 += x;
    lt.attn_normed = layer_norm(r1, layer.attn_norm_gain, layer.attn_norm_bias, lt.attn_norm);
    lt.ffn_pre = affine(lt.attn_normed, layer.ffn_in_w, layer.ffn_in_b);
    lt.ffn_act = lt.ffn_pre.unaryExpr([](T v) { return gelu(v); });
    Matrix<T> f = affine(lt.ffn_act, layer.ffn_out_w, layer.ffn_out_b);
    if (dropout) {
      lt.ffn_keep = dropout_keep<T>(rng, rows, d, c.dropout);
      f.array() *= lt.ffn_keep.array();
    } else {
      lt.ffn_keep.resize(0, 0);
    }
    f += lt.attn_normed;
    x = layer_norm(f, layer.ffn_norm_gain, layer.ffn_norm_bias, lt.ffn_norm);
  }
  return x;
}

template <class T>
Matrix<T> mlm_head(const Parameters<T>& params, const Matrix<T>& hidden, HeadTrace<T>* trace,
                   const Matrix<T>* output_weights) {
  const Matrix<T>& w = output_weights ? *output_weights : params.token_embedding;
  check_shape(w.rows() == params.output_bias.cols() && w.cols() == hidden.cols(),
              "MLM output projection");
  HeadTrace<T> local;
  HeadTrace<T>& ht = trace ? *trace : local;
  ht.hidden = hidden;
  ht.output_weights = output_weights;
  ht.pre = affine(hidden, params.head_transform_w, params.head_transform_b);
  ht.act = ht.pre.unaryExpr([](T v) { return gelu(v); });
  const Matrix<T> t = layer_norm(ht.act, params.head_norm_gain, params.head_norm_bias, ht.norm);
  return project_rows(t, w, params.output_bias);
}

template <class T>
Matrix<T> forward(const Parameters<T>& params, const TokenBatch& batch,
                  const ForwardOptions& options, ForwardTrace<T>* trace) {
  const Matrix<T> hidden = encode(params, batch, options, trace ? &trace->encoder : nullptr);
  return mlm_head(params, hidden, trace ? &trace->head : nullptr);
}

template <class T>
Matrix<T> replay(const Parameters<T>& params, const ForwardTrace<T>& trace) {
  const Matrix<T> hidden = encode(params, trace.encoder.batch, trace.encoder.options);
  return mlm_head<T>(params, hidden, nullptr, trace.head.output_weights);
}

template <class T>
Matrix<T> head_backward(const Parameters<T>& params, const HeadTrace<T>& trace,
                        const Matrix<T>& logit_grad, Parameters<T>& grads,
                        Matrix<T>* output_weights_grad) {
  const Matrix<T>& w = trace.output_weights ? *trace.output_weights : params.token_embedding;
  check_shape(logit_grad.rows() == trace.hidden.rows() && logit_grad.cols() == w.rows(),
              "logit gradient");
  Matrix<T>* w_grad = &grads.token_embedding;
  if (trace.output_weights) {
    check_shape(output_weights_grad != nullptr && output_weights_grad->rows() == w.rows() &&
                    output_weights_grad->cols() == w.cols(),
                "untied output gradient");
    w_grad = output_weights_grad;
  }
  // Rebuild the normalized transform output from the cache.
  Matrix<T> t = trace.norm.normalized;
  t.array().rowwise() *= params.head_norm_gain.row(0).array();
  t.rowwise() += params.head_norm_bias.row(0);

  grads.output_bias.row(0) += logit_grad.colwise().sum();
  w_grad->noalias() += logit_grad.transpose() * t;
  const Matrix<T> dt = logit_grad * w;
  Matrix<T> dact = layer_norm_backward(dt, params.head_norm_gain, trace.norm,
                                       grads.head_norm_gain, grads.head_norm_bias);
  dact.array() *= trace.pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
  grads.head_transform_b.row(0) += dact.colwise().sum();
  grads.head_transform_w.noalias() += trace.hidden.transpose() * dact;
  return dact * params.head_transform_w.transpose();
}

template <class T>
void encoder_backward(const Parameters<T>& params, const EncoderTrace<T>& trace,
                      const Matrix<T>& hidden_grad, Parameters<T>& grads) {
  const auto& c = params.config;
  const auto d = static_cast<Eigen::Index>(c.d_model);
  const auto heads = static_cast<Eigen::Index>(c.n_heads);
  const auto dh = d / heads;
  const auto len = static_cast<Eigen::Index>(trace.batch.length);
  const auto rows = static_cast<Eigen::Index>(trace.batch.rows());
  check_shape(hidden_grad.rows() == rows && hidden_grad.cols() == d, "hidden gradient");
  check_shape(trace.layers.size() == params.layers.size(), "trace layers");
  const T scale = T(1) / std::sqrt(T(dh));

  Matrix<T> dx = hidden_grad;
  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    const auto& lt = trace.layers[li];
    auto& g = grads.layers[li];

    Matrix<T> dr2 = layer_norm_backward(dx, layer.ffn_norm_gain, lt.ffn_norm, g.ffn_norm_gain,
                                        g.ffn_norm_bias);
    Matrix<T> df = dr2;
    if (lt.ffn_keep.size() != 0) df.array() *= lt.ffn_keep.array();
    g.ffn_out_b.row(0) += df.colwise().sum();
    g.ffn_out_w.noalias() += lt.ffn_act.transpose() * df;
    Matrix<T> dpre = df * layer.ffn_out_w.transpose();
    dpre.array() *= lt.ffn_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
    g.ffn_in_b.row(0) += dpre.colwise().sum();
    g.ffn_in_w.noalias() += lt.attn_normed.transpose() * dpre;
    Matrix<T> dx1 = dr2;
    dx1.noalias() += dpre * layer.ffn_in_w.transpose();

    Matrix<T> dr1 = layer_norm_backward(dx1, layer.attn_norm_gain, lt.attn_norm, g.attn_norm_gain,
                                        g.attn_norm_bias);
    g.attn_out_b.row(0) += dr1.colwise().sum();
    g.attn_out_w.noalias() += lt.context.transpose() * dr1;
    const Matrix<T> dctx = dr1 * layer.attn_out_w.transpose();

    Matrix<T> dq(rows, d), dk(rows, d), dv(rows, d);
    std::size_t idx = 0;
    for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(trace.batch.batch); ++b) {
      for (Eigen::Index h = 0; h < heads; ++h, ++idx) {
        const Matrix<T>& p = lt.probs[idx];
        const auto q = lt.query.block(b * len, h * dh, len, dh);
        const auto k = lt.key.block(b * len, h * dh, len, dh);
        const auto v = lt.value.block(b * len, h * dh, len, dh);
        const auto dout = dctx.block(b * len, h * dh, len, dh);
        const bool has_keep = !lt.probs_keep.empty();
        Matrix<T> dp;
        if (has_keep) {
          const Matrix<T> pd = p.cwiseProduct(lt.probs_keep[idx]);
          dv.block(b * len, h * dh, len, dh) = pd.transpose() * dout;
          dp = (dout * v.transpose()).cwiseProduct(lt.probs_keep[idx]);
        } else {
          dv.block(b * len, h * dh, len, dh) = p.transpose() * dout;
          dp = dout * v.transpose();
        }
        const Matrix<T> row_dot = dp.cwiseProduct(p).rowwise().sum();
        Matrix<T> ds = p.cwiseProduct(dp - row_dot.replicate(1, len));
        ds *= scale;
        dq.block(b * len, h * dh, len, dh) = ds * k;
        dk.block(b * len, h * dh, len, dh) = ds.transpose() * q;
      }
    }
    g.query_b.row(0) += dq.colwise().sum();
    g.key_b.row(0) += dk.colwise().sum();
    g.value_b.row(0) += dv.colwise().sum();
    g.query_w.noalias() += lt.input.transpose() * dq;
    g.key_w.noalias() += lt.input.transpose() * dk;
    g.value_w.noalias() += lt.input.transpose() * dv;
    dx = dr1;
    dx.noalias() += dq * layer.query_w.transpose();
    dx.noalias() += dk * layer.key_w.transpose();
    dx.noalias() += dv * layer.value_w.transpose();
  }

  if (trace.embedding_keep.size() != 0) dx.array() *= trace.embedding_keep.array();
  for (Eigen::Index r = 0; r < rows; ++r) {
    grads.token_embedding.row(trace.batch.ids[static_cast<std::size_t>(r)]) += dx.row(r);
    grads.position_embedding.row(r % len) += dx.row(r);
  }
}

template <class T>
void backward(const Parameters<T>& params, const ForwardTrace<T>& trace,
              const Matrix<T>& logit_grad, Parameters<T>& grads) {
  const Matrix<T> dhidden = head_backward(params, trace.head, logit_grad, grads);
  encoder_backward(params, trace.encoder, dhidden, grads);
}

template <class T>
bool all_finite(const Parameters<T>& params) {
  bool ok = true;
  params.for_each([&](std::string_view, const Matrix<T>& m) { ok = ok && m.allFinite(); });
  return ok;
}

#define PBG2P_INSTANTIATE(T)                                                                    \
  template struct Parameters<T>;                                                                \
  template std::uint64_t param_count(const Parameters<T>&);                                     \
  template Parameters<T> init_random<T>(const ModelConfig&);                                    \
  template Parameters<T> extend_and_init(const Parameters<T>&, const VocabMap&, const VocabMap&, \
                                         InitMode);                                             \
  template Matrix<T> encode(const Parameters<T>&, const TokenBatch&, const ForwardOptions&,     \
                            EncoderTrace<T>*);                                                  \
  template Matrix<T> mlm_head(const Parameters<T>&, const Matrix<T>&, HeadTrace<T>*,            \
                              const Matrix<T>*);                                                \
  template Matrix<T> forward(const Parameters<T>&, const TokenBatch&, const ForwardOptions&,    \
                             ForwardTrace<T>*);                                                 \
  template Matrix<T> replay(const Parameters<T>&, const ForwardTrace<T>&);                      \
  template Matrix<T> head_backward(const Parameters<T>&, const HeadTrace<T>&, const Matrix<T>&, \
                                   Parameters<T>&, Matrix<T>*);                                 \
  template void encoder_backward(const Parameters<T>&, const EncoderTrace<T>&,                  \
                                 const Matrix<T>&, Parameters<T>&);                             \
  template void backward(const Parameters<T>&, const ForwardTrace<T>&, const Matrix<T>&,        \
                         Parameters<T>&);                                                       \
  template bool all_finite(const Parameters<T>&);

PBG2P_INSTANTIATE(float)
PBG2P_INSTANTIATE(double)
// Extended precision backs the finite-difference oracle.
PBG2P_INSTANTIATE(long double)

#undef PBG2P_INSTANTIATE

}  // namespace pbg2p
