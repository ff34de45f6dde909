#include "memrec/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

namespace memrec {

namespace {

bool is_space(char32_t cp) {
    return u_isUWhiteSpace(static_cast<UChar32>(cp));
}

bool is_word_char(char32_t cp) {
    return u_isalnum(static_cast<UChar32>(cp)) || u_getIntPropertyValue(static_cast<UChar32>(cp), UCHAR_GENERAL_CATEGORY_MASK) & U_GC_M_MASK;
}

std::string nfc_casefold(std::string_view text) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
    icu::UnicodeString ustr = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    ustr.foldCase();
    if (U_SUCCESS(status)) {
        icu::UnicodeString normalized = nfc->normalize(ustr, status);
        if (U_SUCCESS(status)) ustr = normalized;
    }
    std::string out;
    ustr.toUTF8String(out);
    return out;
}

std::string collapse_whitespace(const std::vector<char32_t>& cps) {
    std::string out;
    bool pending_space = false;
    for (char32_t cp : cps) {
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        out += encode_utf8(cp);
    }
    return out;
}

}  // namespace

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        auto c = static_cast<unsigned char>(text[i]);
        char32_t cp = 0xFFFD;
        std::size_t len = 1;
        if (c < 0x80) {
            cp = c;
        } else if ((c >> 5) == 0x6) {
            len = 2;
        } else if ((c >> 4) == 0xE) {
            len = 3;
        } else if ((c >> 3) == 0x1E) {
            len = 4;
        }
        if (len > 1) {
            if (i + len > text.size()) {
                len = 1;
            } else {
                char32_t acc = c & (0xFF >> (len + 1));
                bool ok = true;
                for (std::size_t k = 1; k < len; ++k) {
                    auto cc = static_cast<unsigned char>(text[i + k]);
                    if ((cc >> 6) != 0x2) {
                        ok = false;
                        break;
                    }
                    acc = (acc << 6) | (cc & 0x3F);
                }
                if (ok && acc <= 0x10FFFF && !(acc >= 0xD800 && acc <= 0xDFFF)) {
                    cp = acc;
                } else {
                    len = 1;
                }
            }
        }
        out.push_back(cp);
        i += len;
    }
    return out;
}

std::string encode_utf8(char32_t cp) {
    std::string out;
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
}

bool is_cjk(char32_t cp) {
    return (cp >= 0x4E00 && cp <= 0x9FFF)     // unified ideographs
        || (cp >= 0x3400 && cp <= 0x4DBF)     // extension A
        || (cp >= 0x20000 && cp <= 0x2EBEF)   // extensions B-F
        || (cp >= 0xF900 && cp <= 0xFAFF)     // compatibility ideographs
        || (cp >= 0x3040 && cp <= 0x30FF)     // hiragana, katakana
        || (cp >= 0xAC00 && cp <= 0xD7AF);    // hangul syllables
}

std::string canonicalize(std::string_view text) {
    return collapse_whitespace(decode_utf8(nfc_casefold(text)));
}

std::string canonical_title(std::string_view text) {
    std::vector<char32_t> kept;
    for (char32_t cp : decode_utf8(nfc_casefold(text))) {
        if (u_ispunct(static_cast<UChar32>(cp))) continue;
        kept.push_back(cp);
    }
    return collapse_whitespace(kept);
}

std::vector<std::string> word_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string current;
    for (char32_t cp : decode_utf8(nfc_casefold(text))) {
        if (is_cjk(cp)) {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
            tokens.push_back(encode_utf8(cp));
        } else if (is_word_char(cp)) {
            current += encode_utf8(cp);
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

}  // namespace memrec
