#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <unistd.h>

#include "pbg2p/corpus.hpp"
#include "pbg2p/lexicon.hpp"
#include "pbg2p/utf8.hpp"
#include "pbg2p/vocab.hpp"

namespace pbg2p::test {

inline std::u32string u32(std::string_view s) { return utf8::decode(s); }

inline char32_t ch(std::string_view s) { return utf8::decode(s).at(0); }

inline Pinyin py(std::string_view s) { return Pinyin::parse(s); }

// 泊 and 扎 are the polyphones used throughout; 乐 joins for a third entry.
inline Lexicon toy_lexicon() {
  return Lexicon::parse("泊\tpo1,bo2\n扎\tzha1,zha2,za1\n乐\tle4,yue4\n");
}

inline std::vector<std::string> toy_base_tokens() {
  return VocabMap::base_tokens_for(u32("小船漂泊在湖里鱼拼命挣扎破了网乐快音"));
}

inline VocabMap toy_vocab() { return VocabMap::build(toy_base_tokens(), toy_lexicon()); }

inline VocabMap toy_base_vocab() { return VocabMap::build(toy_base_tokens(), Lexicon{}); }

// "小船漂泊在湖泊里": 泊 at 3 read bo2, 泊 at 6 read po1.
inline LabeledSentence boat_sentence() {
  return {u32("小船漂泊在湖泊里"), {{3, py("bo2")}, {6, py("po1")}}};
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() /
             ("pbg2p_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void spit(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary);
  f << bytes;
}

}  // namespace pbg2p::test
