#include "pbg2p/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "pbg2p/errors.hpp"
#include "pbg2p/utf8.hpp"

namespace pbg2p {

namespace {

static_assert(std::numeric_limits<float>::is_iec559);

class Writer {
 public:
  void u8(std::uint8_t v) { bytes.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes.append(s);
  }
  std::string bytes;
};

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::string_view take(std::size_t n) {
    if (n > data_.size() - pos_) throw FormatError("checkpoint truncated");
    auto out = data_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{u8()} << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{u8()} << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    return std::string(take(n));
  }
  std::size_t pos() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  std::string_view data_;
  std::size_t pos_ = 0;
};

std::uint32_t crc(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

void write_block(Writer& out, const std::string& payload) {
  out.u32(static_cast<std::uint32_t>(payload.size()));
  out.bytes.append(payload);
  out.u32(crc(payload));
}

std::string_view read_block(Reader& in, const char* what) {
  const auto size = in.u32();
  const auto payload = in.take(size);
  if (in.u32() != crc(payload)) throw ChecksumError(std::string("checksum mismatch in ") + what);
  return payload;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  Writer out;
  out.bytes.append(kCheckpointMagic, 5);
  out.u32(kCheckpointVersion);

  Writer config;
  const auto& c = ckpt.config;
  for (auto v : {c.vocab_size, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.max_len}) {
    config.u64(v);
  }
  config.f64(c.dropout);
  config.u64(c.seed);
  write_block(out, config.bytes);

  Writer vocab;
  vocab.u32(static_cast<std::uint32_t>(ckpt.base_tokens.size()));
  for (const auto& t : ckpt.base_tokens) vocab.str(t);
  vocab.u32(static_cast<std::uint32_t>(ckpt.ncmc_lexicon.entries().size()));
  for (const auto& [ch, entry] : ckpt.ncmc_lexicon.entries()) {
    vocab.u32(static_cast<std::uint32_t>(ch));
    vocab.u32(static_cast<std::uint32_t>(entry.readings.size()));
    for (const auto& r : entry.readings) vocab.str(r.str());
  }
  write_block(out, vocab.bytes);

  out.u32(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    Writer rec;
    rec.str(t.name);
    rec.u8(0);
    rec.u32(2);
    rec.u64(static_cast<std::uint64_t>(t.value.rows()));
    rec.u64(static_cast<std::uint64_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) rec.f32(t.value.data()[i]);
    out.bytes.append(rec.bytes);
    out.u32(crc(rec.bytes));
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot write checkpoint " + path.string());
  f.write(out.bytes.data(), static_cast<std::streamsize>(out.bytes.size()));
  if (!f) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open checkpoint " + path.string());
  const std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader in(data);
  if (in.take(5) != std::string_view(kCheckpointMagic, 5)) throw FormatError("not a PBG2P checkpoint");
  const auto version = in.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }

  Checkpoint ckpt;
  {
    Reader config(read_block(in, "config block"));
    auto& c = ckpt.config;
    c.vocab_size = config.u64();
    c.d_model = config.u64();
    c.n_layers = config.u64();
    c.n_heads = config.u64();
    c.d_ff = config.u64();
    c.max_len = config.u64();
    c.dropout = config.f64();
    c.seed = config.u64();
  }
  {
    Reader vocab(read_block(in, "vocab block"));
    const auto n = vocab.u32();
    for (std::uint32_t i = 0; i < n; ++i) ckpt.base_tokens.push_back(vocab.str());
    const auto entries = vocab.u32();
    for (std::uint32_t i = 0; i < entries; ++i) {
      PolyphoneEntry e{static_cast<char32_t>(vocab.u32()), {}};
      const auto k = vocab.u32();
      for (std::uint32_t r = 0; r < k; ++r) e.readings.push_back(Pinyin::parse(vocab.str()));
      ckpt.ncmc_lexicon.add_entry(std::move(e));
    }
  }
  const auto count = in.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto start = in.pos();
    NamedTensor t;
    t.name = in.str();
    if (in.u8() != 0) throw FormatError("tensor " + t.name + ": unsupported dtype");
    if (in.u32() != 2) throw FormatError("tensor " + t.name + ": unsupported rank");
    const auto rows = in.u64();
    const auto cols = in.u64();
    if (rows * cols > (data.size() - in.pos()) / 4) throw FormatError("checkpoint truncated");
    t.value.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < t.value.size(); ++k) t.value.data()[k] = in.f32();
    const auto record = std::string_view(data).substr(start, in.pos() - start);
    if (in.u32() != crc(record)) throw ChecksumError("checksum mismatch in tensor " + t.name);
    ckpt.tensors.push_back(std::move(t));
  }
  if (!in.done()) throw FormatError("trailing bytes after checkpoint");
  return ckpt;
}

void save_model(const std::filesystem::path& path, const Parameters<float>& params,
                const VocabMap& vocab, const std::vector<NamedTensor>& extras) {
  if (params.config.vocab_size != vocab.size()) {
    throw ConfigError("parameters cover " + std::to_string(params.config.vocab_size) +
                      " tokens but the vocabulary has " + std::to_string(vocab.size()));
  }
  Checkpoint ckpt;
  ckpt.config = params.config;
  ckpt.base_tokens = vocab.base_tokens();
  ckpt.ncmc_lexicon = vocab.lexicon();
  params.for_each([&](std::string_view name, const Matrix<float>& m) {
    ckpt.tensors.push_back({std::string(name), m});
  });
  ckpt.tensors.insert(ckpt.tensors.end(), extras.begin(), extras.end());
  write_checkpoint(path, ckpt);
}

Parameters<float> parameters_from(const ModelConfig& config, std::vector<NamedTensor> tensors,
                                  std::vector<NamedTensor>* extras) {
  config.validate();
  auto params = Parameters<float>::zeros(config);
  std::map<std::string, Matrix<float>*> slots;
  params.for_each([&](std::string_view name, Matrix<float>& m) { slots.emplace(name, &m); });
  for (auto& t : tensors) {
    const auto it = slots.find(t.name);
    if (it == slots.end()) {
      if (extras) extras->push_back(std::move(t));
      continue;
    }
    if (it->second->rows() != t.value.rows() || it->second->cols() != t.value.cols()) {
      throw FormatError("tensor " + t.name + " has the wrong shape");
    }
    *it->second = std::move(t.value);
    slots.erase(it);
  }
  if (!slots.empty()) throw FormatError("checkpoint lacks tensor " + slots.begin()->first);
  return params;
}

LoadedModel load_model(const std::filesystem::path& path) {
  Checkpoint ckpt = read_checkpoint(path);
  ckpt.config.validate();
  auto vocab = VocabMap::build(ckpt.base_tokens, ckpt.ncmc_lexicon);
  if (vocab.size() != ckpt.config.vocab_size) {
    throw FormatError("vocabulary block does not match the configured vocab size");
  }
  LoadedModel out{{}, std::move(vocab), {}};
  out.params = parameters_from(ckpt.config, std::move(ckpt.tensors), &out.extras);
  return out;
}

}  // namespace pbg2p
