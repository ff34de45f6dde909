#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/llm.hpp"
#include "memrec/memory_bank.hpp"
#include "memrec/prompt.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

struct Embedding {
    std::vector<double> values;
    bool zero = false;  // input had nothing to embed; values are all 0
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::size_t dimension() const = 0;
    virtual Embedding embed(std::string_view text) const = 0;
};

// Signed feature hashing of character 3-grams (code points of the
// canonicalized text) with FNV-1a, L2-normalized.
class HashNgramEmbedder final : public Embedder {
public:
    explicit HashNgramEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}
    std::size_t dimension() const override { return dimension_; }
    Embedding embed(std::string_view text) const override;

private:
    std::size_t dimension_;
};

// OpenAI-compatible POST /v1/embeddings. Vectors are L2-normalized locally.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string endpoint, std::string model, std::string api_key, std::size_t dimension, int timeout_seconds = 60);
    std::size_t dimension() const override { return dimension_; }
    Embedding embed(std::string_view text) const override;

private:
    std::string endpoint_;
    std::string model_;
    std::string api_key_;
    std::size_t dimension_;
    int timeout_seconds_;
};

// dot(a,b)/(|a||b|), 0 when either norm is 0. Throws DimensionMismatch.
double cosine(std::span<const double> a, std::span<const double> b);

struct RetrievalConfig {
    std::size_t prefilter_m = 20;
    std::size_t q = 3;
    std::size_t skip_prefilter_below = 30;

    // Throws InvalidArgument unless 1 <= q <= prefilter_m and all counts >= 1.
    void validate() const;
};

struct ScoredEntity {
    std::string entity;
    double score = 0.0;

    bool operator==(const ScoredEntity&) const = default;
};

struct RetrievedMemory {
    std::vector<std::string> entities;   // relevance order
    std::vector<std::string> attitudes;  // aligned with entities
    std::vector<ScoredEntity> prefilter_scores;
    bool degraded = false;                 // stage 2 failed; stage-1 order used
    std::vector<std::string> rejected;   // model-returned entities outside the candidates

    bool empty() const { return entities.empty(); }
};

// Text embedded for an entry: entity + " " + attitude.
std::string entry_embedding_text(const MemoryEntry& entry);

// Every entity scored against the context, descending, ties by entity.
std::vector<ScoredEntity> similarity_ranking(const MemoryBank& bank, std::string_view context, const Embedder& embedder);

// Top-m of similarity_ranking, or every entity with score 1.0 when the bank
// holds no more than `skip_below` entries.
std::vector<ScoredEntity> prefilter(const MemoryBank& bank, std::string_view context, const Embedder& embedder, std::size_t m,
                                    std::size_t skip_below);

// Similarity prefilter, then the retrieve template picks up to q entities;
// attitudes are read back (refreshing timestamps).
RetrievedMemory retrieve(MemoryBank& bank, std::span<const Utterance> context, LanguageModelPort& llm, const Embedder& embedder,
                         const RetrievalConfig& cfg, const TemplateSet& templates = TemplateSet::builtin());

// Alternatives used by the memory-mode comparison.
RetrievedMemory retrieve_all(MemoryBank& bank);
RetrievedMemory retrieve_random(MemoryBank& bank, std::size_t q, std::uint64_t seed);
RetrievedMemory retrieve_similar(MemoryBank& bank, std::span<const Utterance> context, const Embedder& embedder, std::size_t q);

}  // namespace memrec
