#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

// NFC-normalize, case-fold, trim and collapse internal whitespace runs to a
// single ASCII space. Used for memory-bank entity keys.
std::string canonicalize(std::string_view text);

// canonicalize() followed by removal of all Unicode punctuation, then
// whitespace collapsing again. Used to match free-text titles to catalog IDs.
std::string canonical_title(std::string_view text);

// Canonical lowercase word tokens: maximal runs of letters/digits (each CJK
// ideograph is its own token).
std::vector<std::string> word_tokens(std::string_view text);

// Unicode code points of a UTF-8 string. Invalid bytes decode to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view text);
std::string encode_utf8(char32_t cp);

bool is_cjk(char32_t cp);

// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace memrec
