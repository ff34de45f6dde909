#pragma once

#include <array>
#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <string_view>

namespace memrec {

inline constexpr std::array<std::size_t, 3> kMetricCuts{5, 10, 20};

// 1 when any truth item is in the top k.
double hit_rate_at_k(std::span<const std::string> ranked, const std::set<std::string>& truth, std::size_t k);
// 1/rank of the first truth item within the top k, else 0.
double mrr_at_k(std::span<const std::string> ranked, const std::set<std::string>& truth, std::size_t k);
// Binary-gain NDCG; IDCG places min(k, |truth|) hits at the top.
double ndcg_at_k(std::span<const std::string> ranked, const std::set<std::string>& truth, std::size_t k);

// Whitespace-delimited tokens, except that every CJK character is a token
// on its own.
std::size_t count_tokens(std::string_view text);

}  // namespace memrec
