#include "memrec/metrics.hpp"

#include "memrec/error.hpp"
#include "memrec/text.hpp"

#include <algorithm>
#include <cmath>

namespace memrec {

namespace {

void require_k(std::size_t k) {
    if (k < 1) throw Error(ErrorKind::InvalidArgument, "k must be at least 1");
}

}  // namespace

double hit_rate_at_k(std::span<const std::string> ranked, const std::set<std::string>& truth, std::size_t k) {
    require_k(k);
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (truth.count(ranked[i])) return 1.0;
    }
    return 0.0;
}

double mrr_at_k(std::span<const std::string> ranked, const std::set<std::string>& truth, std::size_t k) {
    require_k(k);
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (truth.count(ranked[i])) return 1.0 / static_cast<double>(i + 1);
    }
    return 0.0;
}

double ndcg_at_k(std::span<const std::string> ranked, const std::set<std::string>& truth, std::size_t k) {
    require_k(k);
    if (truth.empty()) return 0.0;
    double dcg = 0.0;
    const std::size_t n = std::min(k, ranked.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (truth.count(ranked[i])) dcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    }
    double idcg = 0.0;
    const std::size_t ideal = std::min(k, truth.size());
    for (std::size_t i = 0; i < ideal; ++i) idcg += 1.0 / std::log2(static_cast<double>(i) + 2.0);
    return dcg / idcg;
}

std::size_t count_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_word = false;
    for (char32_t cp : decode_utf8(text)) {
        const bool space = cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v' || cp == 0x3000 ||
                           cp == 0xA0;
        if (is_cjk(cp)) {
            ++count;
            in_word = false;
        } else if (space) {
            in_word = false;
        } else if (!in_word) {
            ++count;
            in_word = true;
        }
    }
    return count;
}

}  // namespace memrec
