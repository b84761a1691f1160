#pragma once

#include <string>
#include <string_view>

namespace pbg2p::utf8 {

// Throws ParseError on invalid UTF-8 (overlong forms, surrogates, truncation).
std::u32string decode(std::string_view bytes);

std::string encode(char32_t code_point);
std::string encode(std::u32string_view text);

}  // namespace pbg2p::utf8
