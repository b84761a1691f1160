#include <gtest/gtest.h>

#include <cstring>

#include "pbg2p/checkpoint.hpp"
#include "pbg2p/errors.hpp"
#include "support.hpp"

using namespace pbg2p;
using namespace pbg2p::test;

namespace {

ModelConfig config_for(const VocabMap& v) {
  ModelConfig c;
  c.vocab_size = v.size();
  c.d_model = 16;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_ff = 24;
  c.max_len = 12;
  c.dropout = 0.1;
  c.seed = 21;
  return c;
}

void expect_bitwise(const Parameters<float>& a, const Parameters<float>& b) {
  EXPECT_EQ(a.config, b.config);
  std::vector<const Matrix<float>*> left;
  a.for_each([&](std::string_view, const Matrix<float>& m) { left.push_back(&m); });
  std::size_t i = 0;
  b.for_each([&](std::string_view name, const Matrix<float>& m) {
    const auto& l = *left[i++];
    ASSERT_EQ(l.rows(), m.rows()) << name;
    ASSERT_EQ(l.cols(), m.cols()) << name;
    EXPECT_EQ(std::memcmp(l.data(), m.data(), sizeof(float) * static_cast<std::size_t>(m.size())), 0)
        << name;
  });
}

class CheckpointTest : public ::testing::Test {
 protected:
  void SetUp() override { dir = temp_dir("ckpt"); }
  void TearDown() override { std::filesystem::remove_all(dir); }
  std::filesystem::path dir;
};

}  // namespace

TEST_F(CheckpointTest, FreshModelRoundTrip) {
  const auto v = toy_base_vocab();
  const auto p = init_random<float>(config_for(v));
  save_model(dir / "m.ckpt", p, v);
  const auto loaded = load_model(dir / "m.ckpt");
  expect_bitwise(p, loaded.params);
  EXPECT_EQ(loaded.vocab, v);
  EXPECT_TRUE(loaded.extras.empty());
}

TEST_F(CheckpointTest, ExtendedModelAndExtras) {
  const auto base = toy_base_vocab();
  const auto ext = toy_vocab();
  const auto p = extend_and_init(init_random<float>(config_for(base)), base, ext, InitMode::scpc);
  Matrix<float> extra(2, 3);
  extra << 1, 2, 3, 4, 5, 6;
  save_model(dir / "e.ckpt", p, ext, {{"extra.thing", extra}});
  const auto loaded = load_model(dir / "e.ckpt");
  expect_bitwise(p, loaded.params);
  EXPECT_EQ(loaded.vocab, ext);
  ASSERT_EQ(loaded.extras.size(), 1u);
  EXPECT_EQ(loaded.extras[0].name, "extra.thing");
  EXPECT_EQ(loaded.extras[0].value, extra);
}

TEST_F(CheckpointTest, ExtendAfterReloadMatchesInMemory) {
  const auto base = toy_base_vocab();
  const auto ext = toy_vocab();
  const auto p = init_random<float>(config_for(base));
  save_model(dir / "base.ckpt", p, base);
  const auto reloaded = load_model(dir / "base.ckpt");
  const auto from_disk = extend_and_init(reloaded.params, reloaded.vocab, ext, InitMode::unk);
  save_model(dir / "ext.ckpt", from_disk, ext);
  expect_bitwise(extend_and_init(p, base, ext, InitMode::unk), load_model(dir / "ext.ckpt").params);
}

TEST_F(CheckpointTest, WriteIsDeterministic) {
  const auto v = toy_vocab();
  const auto p = init_random<float>(config_for(v));
  save_model(dir / "a.ckpt", p, v);
  save_model(dir / "b.ckpt", p, v);
  EXPECT_EQ(slurp(dir / "a.ckpt"), slurp(dir / "b.ckpt"));
  EXPECT_EQ(slurp(dir / "a.ckpt").substr(0, 5), "PBG2P");
}

TEST_F(CheckpointTest, CorruptedTensorByteFailsChecksum) {
  const auto v = toy_vocab();
  save_model(dir / "m.ckpt", init_random<float>(config_for(v)), v);
  const auto bytes = slurp(dir / "m.ckpt");
  // Flip bytes in several places inside tensor payloads.
  for (std::size_t back : {std::size_t{9}, std::size_t{40}, std::size_t{700}, bytes.size() / 2}) {
    auto bad = bytes;
    bad[bad.size() - back] = static_cast<char>(bad[bad.size() - back] ^ 0x10);
    spit(dir / "bad.ckpt", bad);
    EXPECT_THROW(load_model(dir / "bad.ckpt"), ChecksumError) << back;
  }
}

TEST_F(CheckpointTest, HeaderDamage) {
  const auto v = toy_vocab();
  save_model(dir / "m.ckpt", init_random<float>(config_for(v)), v);
  const auto bytes = slurp(dir / "m.ckpt");

  auto magic = bytes;
  magic[0] = 'X';
  spit(dir / "magic.ckpt", magic);
  EXPECT_THROW(read_checkpoint(dir / "magic.ckpt"), FormatError);

  auto version = bytes;
  version[5] = 7;
  spit(dir / "version.ckpt", version);
  EXPECT_THROW(read_checkpoint(dir / "version.ckpt"), FormatError);

  auto config = bytes;
  config[14] = static_cast<char>(config[14] ^ 1);
  spit(dir / "config.ckpt", config);
  EXPECT_THROW(read_checkpoint(dir / "config.ckpt"), ChecksumError);
}

TEST_F(CheckpointTest, Truncation) {
  const auto v = toy_vocab();
  save_model(dir / "m.ckpt", init_random<float>(config_for(v)), v);
  const auto bytes = slurp(dir / "m.ckpt");
  for (std::size_t keep : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() / 3,
                           bytes.size() - 1}) {
    spit(dir / "t.ckpt", bytes.substr(0, keep));
    try {
      read_checkpoint(dir / "t.ckpt");
      ADD_FAILURE() << keep;
    } catch (const ChecksumError&) {
      ADD_FAILURE() << "truncation reported as checksum failure at " << keep;
    } catch (const FormatError&) {
    }
  }
  spit(dir / "long.ckpt", bytes + "x");
  EXPECT_THROW(read_checkpoint(dir / "long.ckpt"), FormatError);
  EXPECT_THROW(read_checkpoint(dir / "absent.ckpt"), Error);
}

TEST_F(CheckpointTest, MissingTensor) {
  const auto v = toy_vocab();
  const auto p = init_random<float>(config_for(v));
  std::vector<NamedTensor> tensors;
  p.for_each([&](std::string_view name, const Matrix<float>& m) {
    if (name != "head.output_bias") tensors.push_back({std::string(name), m});
  });
  EXPECT_THROW(parameters_from(p.config, tensors), FormatError);
  tensors.push_back({"head.output_bias", Matrix<float>::Zero(1, 3)});
  EXPECT_THROW(parameters_from(p.config, tensors), FormatError);
}
