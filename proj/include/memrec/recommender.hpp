#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/general_memory.hpp"
#include "memrec/llm.hpp"
#include "memrec/memory_bank.hpp"
#include "memrec/prompt.hpp"
#include "memrec/retrieval.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

enum class Provenance { ExpertCandidate, LlmSupplement, FallbackPad };

std::string_view to_string(Provenance p);

struct RecommendationRequest {
    std::string user_id;
    std::span<const Utterance> context;
    RetrievedMemory retrieved;
    std::vector<std::string> expert;      // candidate item ids, ranked
    std::vector<std::string> guidelines;
    std::size_t list_length = 20;
    // Padding used after the unused expert candidates run out.
    std::vector<std::string> fallback_pool;
    bool want_reply = false;
};

struct RecommendationResult {
    std::vector<std::string> items;  // catalog ids
    std::vector<Provenance> provenance;
    std::string prompt;
    std::string trajectory;  // prompt + raw model output
    std::string reply;
    bool degraded = false;
    std::vector<std::string> dropped;  // model titles that did not resolve or were not allowed
};

// Blocks of the recommend prompt, exposed so run logs can audit them.
std::string render_memory_block(const RetrievedMemory& retrieved);
std::string render_expert_block(const std::vector<std::string>& expert, const Catalog& catalog);
std::string render_guideline_block(const std::vector<std::string>& guidelines);

// Model picks are resolved to catalog ids (exact canonical-title match);
// unknown, repeated and already-mentioned items are dropped; the list is
// padded from unused expert candidates, then the fallback pool, and cut to
// list_length. On ParseFailure the expert list is returned, flagged degraded.
RecommendationResult recommend(const RecommendationRequest& req, const Catalog& catalog, LanguageModelPort& llm,
                               const TemplateSet& templates = TemplateSet::builtin());

enum class MemoryMode { All, Rand, Sim, Ours };

std::string_view to_string(MemoryMode m);

struct PipelineSwitches {
    bool use_memory = true;
    bool use_expert = true;
    bool use_guidelines = true;
    MemoryMode memory_mode = MemoryMode::Ours;
};

struct PipelinePorts {
    LanguageModelPort& llm;
    const Embedder& embedder;
    const ExpertModel* expert;  // may be null (no collaborative candidates)
    const TemplateSet& templates;
};

struct PipelineConfig {
    RetrievalConfig retrieval;
    std::size_t list_length = 20;
    std::uint64_t seed = 0;  // random memory mode
    bool want_reply = false;
};

struct PipelineOutput {
    RecommendationResult result;
    RetrievedMemory retrieved;
    std::vector<std::string> expert;
    std::string expert_block;
};

// Seed for the random memory mode at one point; independent of visit order.
std::uint64_t point_seed(std::uint64_t seed, const EvaluationPoint& point);

// Retrieval -> expert candidates -> recommend for one point. `bank` may be
// null for users without memory. Banks are read (timestamps refreshed) but
// never extended here.
PipelineOutput run_pipeline(const EvaluationPoint& point, const Catalog& catalog, MemoryBank* bank, const GuidelineSet& guidelines,
                            const PipelinePorts& ports, const PipelineConfig& cfg, const PipelineSwitches& switches = {});

}  // namespace memrec
