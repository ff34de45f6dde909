#pragma once

#include "memrec/config.hpp"
#include "memrec/dialogue.hpp"
#include "memrec/experiment.hpp"
#include "memrec/general_memory.hpp"
#include "memrec/llm.hpp"
#include "memrec/memory_bank.hpp"
#include "memrec/prompt.hpp"
#include "memrec/retrieval.hpp"

#include <memory>

namespace memrec {

// Ports and settings assembled from a Config.
struct Runtime {
    std::unique_ptr<LanguageModelPort> llm;
    MockLlm* mock = nullptr;  // set when llm.kind = mock
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<ExpertModel> expert;  // null when expert.kind = none
    TemplateSet templates = TemplateSet::builtin();
    ExperimentConfig experiment;
    Tick delete_threshold = 0;  // 0 keeps everything
    GuidelineSet guidelines;

    ExperimentPorts ports() const { return {*llm, *embedder, expert.get(), templates}; }
};

// Throws ConfigError for unknown keys.
void check_config_keys(const Config& cfg);

// `corpus` trains the co-visit expert (Train sessions) and, for the mock
// model, supplies the annotations it replays. Throws ConfigError.
Runtime make_runtime(const Config& cfg, const Corpus& corpus);

}  // namespace memrec
