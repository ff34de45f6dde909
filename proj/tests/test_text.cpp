#include "memrec/text.hpp"

#include <gtest/gtest.h>

using namespace memrec;

TEST(Canonicalize, FoldsCaseTrimsAndCollapsesWhitespace) {
    EXPECT_EQ(canonicalize("  Scarlett   JOHANSSON \n"), "scarlett johansson");
    EXPECT_EQ(canonicalize(""), "");
    EXPECT_EQ(canonicalize(" \t "), "");
}

TEST(Canonicalize, NormalizesToNfc) {
    // "é" precomposed vs "e" + combining acute
    EXPECT_EQ(canonicalize("Caf\xC3\xA9"), canonicalize("Cafe\xCC\x81"));
    EXPECT_EQ(canonicalize("STRASSE"), canonicalize("strasse"));
}

TEST(Canonicalize, IsIdempotent) {
    for (const char* s : {"Her", "  The  Matrix ", "Amélie", "千与千寻", "Sci-Fi"}) {
        auto once = canonicalize(s);
        EXPECT_EQ(canonicalize(once), once) << s;
    }
}

TEST(CanonicalTitle, StripsPunctuation) {
    EXPECT_EQ(canonical_title("Spider-Man: Homecoming!"), "spiderman homecoming");
    EXPECT_EQ(canonical_title("  HER. "), "her");
    EXPECT_EQ(canonical_title("《流浪地球》"), "流浪地球");
}

TEST(WordTokens, SplitsOnNonAlnumAndCjk) {
    EXPECT_EQ(word_tokens("Good evening, a comedy film!"), (std::vector<std::string>{"good", "evening", "a", "comedy", "film"}));
    EXPECT_EQ(word_tokens("我喜欢sci-fi"), (std::vector<std::string>{"我", "喜", "欢", "sci", "fi"}));
    EXPECT_TRUE(word_tokens("").empty());
}

TEST(Utf8, RoundTripsAndReplacesInvalidBytes) {
    std::string s = "a\xC3\xA9\xE4\xB8\xAD\xF0\x9F\x8E\xAC";
    std::string back;
    for (char32_t cp : decode_utf8(s)) back += encode_utf8(cp);
    EXPECT_EQ(back, s);
    auto bad = decode_utf8("a\xFF" "b");
    ASSERT_EQ(bad.size(), 3u);
    EXPECT_EQ(bad[1], U'�');
}

TEST(Fnv1a64, MatchesReferenceVectors) {
    // Published FNV-1a 64-bit test vectors.
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ULL);
}

TEST(IsCjk, CoversIdeographsOnly) {
    EXPECT_TRUE(is_cjk(U'中'));
    EXPECT_TRUE(is_cjk(U'の'));
    EXPECT_FALSE(is_cjk(U'a'));
    EXPECT_FALSE(is_cjk(U'é'));
}
