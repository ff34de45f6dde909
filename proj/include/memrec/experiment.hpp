#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/general_memory.hpp"
#include "memrec/llm.hpp"
#include "memrec/memory_bank.hpp"
#include "memrec/metrics.hpp"
#include "memrec/recommender.hpp"
#include "memrec/retrieval.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

struct VariantSpec {
    std::string label = "base";
    bool without_um = false;
    bool without_ck = false;
    bool without_rg = false;
    bool manual_rg = false;
    MemoryMode memory_mode = MemoryMode::Ours;

    // base, wo_um, wo_ck, wo_rg, manual_rg, wo_gm, all, rand, sim, ours.
    // Throws Error(UnknownVariant).
    static VariantSpec named(std::string_view name);
    static const std::vector<std::string>& names();

    // Throws InvalidArgument when manual_rg and without_rg are both set.
    void validate() const;
    bool reflective() const { return !without_rg && !manual_rg; }
};

struct ExperimentConfig {
    PipelineConfig pipeline;
    std::size_t reflect_every = 10;
    std::size_t guideline_cap = 10;
    bool per_user_mean = false;
};

struct ExperimentPorts {
    LanguageModelPort& llm;
    const Embedder& embedder;
    const ExpertModel* expert;
    const TemplateSet& templates;
};

struct MetricSummary {
    std::size_t samples = 0;
    std::array<double, kMetricCuts.size()> hr{};
    std::array<double, kMetricCuts.size()> mrr{};
    std::array<double, kMetricCuts.size()> ndcg{};

    bool operator==(const MetricSummary&) const = default;
};

struct TokenAccounting {
    double total_dialogues = 0.0;
    double total_um = 0.0;
    double retrieved = 0.0;
    std::size_t users = 0;
};

struct EvalReport {
    std::string variant;
    VariantSpec spec;
    std::vector<std::size_t> cuts{kMetricCuts.begin(), kMetricCuts.end()};
    std::size_t points = 0;
    std::size_t degraded_points = 0;  // a model stage fell back
    std::size_t failed_points = 0;    // the model was unreachable
    MetricSummary all, warm, cold;
    std::size_t warm_users = 0;
    std::size_t cold_users = 0;
    TokenAccounting tokens;
    double retrieval_precision = 0.0;
    std::size_t precision_points = 0;
    std::size_t rejected_entities = 0;
    std::uint64_t guidelines_version = 0;
    std::size_t guidelines_size = 0;
    std::string aggregation = "per_point";
    std::string token_rule = "whitespace tokens, one token per CJK character";
};

// Per-target metrics for one ranked list; checks HR >= NDCG >= MRR at every
// cut and monotonicity in K, throwing std::logic_error on violation.
struct PointScores {
    std::array<double, kMetricCuts.size()> hr{}, mrr{}, ndcg{};
};
PointScores score_target(std::span<const std::string> ranked, const std::string& target);

struct BankBuildReport {
    std::size_t sessions = 0;
    std::size_t skipped_sessions = 0;
    std::size_t entities = 0;
};

// extract_and_add over every Train session, per user, in chronological order.
std::map<std::string, MemoryBank> build_banks(const Corpus& corpus, LanguageModelPort& llm, const TemplateSet& templates,
                                              BankBuildReport* report = nullptr);

using RunLogSink = std::function<void(const std::string& jsonl_line)>;

// Runs every Test evaluation point (after duplicate-target filtering) and
// aggregates metrics overall and for Warm/Cold users. Banks are built from
// Train sessions unless `banks` is supplied; they stay frozen (apart from
// read timestamps) while evaluating.
EvalReport run_experiment(const Corpus& corpus, const VariantSpec& variant, const ExperimentConfig& cfg,
                          const ExperimentPorts& ports, const RunLogSink& runlog = {},
                          const std::map<std::string, MemoryBank>* banks = nullptr);

std::string report_to_json(const EvalReport& report);

struct Comparison {
    std::string text;
    std::string csv;
};

// Aligned metric table across reports with deltas against the first one.
// Throws Error(MismatchedCuts).
Comparison compare_reports(std::span<const EvalReport> reports);

}  // namespace memrec
