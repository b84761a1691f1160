#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "pbg2p/model.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p {

// Binary container, all integers little-endian:
//   "PBG2P" | u32 version
//   config block  : u32 size | payload | u32 crc32
//   vocab block   : u32 size | payload | u32 crc32
//   u32 tensor count, then per tensor:
//     u32 name length | name | u8 dtype (0 = f32) | u32 rank | u64 dims[rank]
//     | f32 payload | u32 crc32 of everything since the name length
inline constexpr char kCheckpointMagic[] = "PBG2P";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Matrix<float> value;
};

struct Checkpoint {
  ModelConfig config;
  std::vector<std::string> base_tokens;
  Lexicon ncmc_lexicon;  // polyphone entries behind the NCMC block, possibly empty
  std::vector<NamedTensor> tensors;
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
// Throws FormatError on bad magic, version or truncation and ChecksumError
// when a block or tensor record fails its CRC.
Checkpoint read_checkpoint(const std::filesystem::path& path);

struct LoadedModel {
  Parameters<float> params;
  VocabMap vocab;
  std::vector<NamedTensor> extras;  // records that are not model parameters
};

void save_model(const std::filesystem::path& path, const Parameters<float>& params,
                const VocabMap& vocab, const std::vector<NamedTensor>& extras = {});
LoadedModel load_model(const std::filesystem::path& path);

// Moves the model tensors out of a record list; other records go to extras.
// Throws FormatError on a missing or misshaped tensor.
Parameters<float> parameters_from(const ModelConfig& config, std::vector<NamedTensor> tensors,
                                  std::vector<NamedTensor>* extras = nullptr);

}  // namespace pbg2p
