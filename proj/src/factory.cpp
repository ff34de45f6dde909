#include "memrec/factory.hpp"

#include "memrec/error.hpp"

#include <cstdlib>
#include <filesystem>

namespace memrec {

namespace {

std::string api_key(const Config& cfg, const std::string& key) {
    auto var = cfg.get_string(key, "OPENAI_API_KEY");
    const char* value = std::getenv(var.c_str());
    return value ? value : "";
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorKind::ConfigError, what); }

}  // namespace

void check_config_keys(const Config& cfg) {
    auto unknown = cfg.unknown_keys(known_config_keys());
    if (unknown.empty()) return;
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    bad("unknown config keys: " + list);
}

Runtime make_runtime(const Config& cfg, const Corpus& corpus) {
    check_config_keys(cfg);
    Runtime rt;

    if (cfg.has("prompts.template_file")) rt.templates = TemplateSet::load(cfg.resolve_path("prompts.template_file"));

    const auto llm_kind = cfg.get_string("llm.kind", "mock");
    if (llm_kind == "mock") {
        auto knowledge = MockKnowledge::from_corpus(corpus);
        if (cfg.has("mock.knowledge")) {
            auto extra = MockKnowledge::from_corpus(load_corpus(cfg.resolve_path("mock.knowledge")));
            for (auto& [k, v] : extra.annotations) knowledge.annotations.emplace(k, std::move(v));
            for (const auto& [id, item] : extra.catalog.items()) {
                if (!knowledge.catalog.contains(id)) knowledge.catalog.add(item);
            }
        }
        auto mock = std::make_unique<MockLlm>(std::move(knowledge), std::vector<MockStub>{},
                                              static_cast<std::uint64_t>(cfg.get_int("mock.seed", 0)));
        rt.mock = mock.get();
        rt.llm = std::move(mock);
    } else if (llm_kind == "http") {
        HttpLlmOptions o;
        o.endpoint = cfg.get_string("llm.endpoint");
        o.model = cfg.get_string("llm.model");
        if (o.endpoint.empty() || o.model.empty()) bad("llm.kind = http needs llm.endpoint and llm.model");
        o.api_key = api_key(cfg, "llm.api_key_env");
        o.max_in_flight = cfg.get_count("llm.max_in_flight", 4);
        o.timeout_seconds = static_cast<int>(cfg.get_count("llm.timeout_seconds", 120));
        rt.llm = std::make_unique<HttpLlm>(std::move(o));
    } else {
        bad("llm.kind must be mock or http, got '" + llm_kind + "'");
    }
    const auto budget = cfg.get_int("llm.retry_budget", 1);
    if (budget < 0) bad("llm.retry_budget must not be negative");
    rt.llm->set_retry_budget(static_cast<std::size_t>(budget));

    const auto emb_kind = cfg.get_string("embedder.kind", "hash");
    if (emb_kind == "hash") {
        rt.embedder = std::make_unique<HashNgramEmbedder>(cfg.get_count("embedder.dimension", 256));
    } else if (emb_kind == "http") {
        auto endpoint = cfg.get_string("embedder.endpoint");
        auto model = cfg.get_string("embedder.model");
        if (endpoint.empty() || model.empty()) bad("embedder.kind = http needs embedder.endpoint and embedder.model");
        rt.embedder = std::make_unique<HttpEmbedder>(endpoint, model, api_key(cfg, "embedder.api_key_env"),
                                                     cfg.get_count("embedder.dimension", 1536));
    } else {
        bad("embedder.kind must be hash or http, got '" + emb_kind + "'");
    }

    const auto candidates = cfg.get_count("expert.candidate_count", 40);
    const auto expert_kind = cfg.get_string("expert.kind", "covisit");
    if (expert_kind == "covisit") {
        rt.expert = std::make_unique<CoVisitExpert>(CoVisitExpert::train(corpus, candidates));
    } else if (expert_kind == "external") {
        if (!cfg.has("expert.candidates_file")) bad("expert.kind = external needs expert.candidates_file");
        rt.expert = std::make_unique<ExternalExpert>(ExternalExpert::load(cfg.resolve_path("expert.candidates_file"), candidates));
    } else if (expert_kind != "none") {
        bad("expert.kind must be covisit, external or none, got '" + expert_kind + "'");
    }

    auto& ex = rt.experiment;
    ex.pipeline.retrieval.prefilter_m = cfg.get_count("retrieval.prefilter_m", 20);
    ex.pipeline.retrieval.q = cfg.get_count("retrieval.q", 3);
    ex.pipeline.retrieval.skip_prefilter_below = cfg.get_count("retrieval.skip_prefilter_below", 30);
    try {
        ex.pipeline.retrieval.validate();
    } catch (const Error& e) {
        bad(e.what());
    }
    ex.pipeline.list_length = cfg.get_count("rec.list_length", 20);
    ex.pipeline.seed = static_cast<std::uint64_t>(cfg.get_int("eval.seed", 0));
    ex.reflect_every = cfg.get_count("rec.reflect_every", 10);
    ex.guideline_cap = cfg.get_count("guidelines.cap", 10);
    ex.per_user_mean = cfg.get_bool("eval.per_user_mean", false);

    const auto threshold = cfg.get_int("memory.delete_threshold", 0);
    if (threshold < 0) bad("memory.delete_threshold must not be negative");
    rt.delete_threshold = static_cast<Tick>(threshold);

    rt.guidelines = seed_manual_guidelines();
    rt.guidelines.cap = ex.guideline_cap;
    if (cfg.has("guidelines.file") && std::filesystem::exists(cfg.resolve_path("guidelines.file")))
        rt.guidelines = load_guidelines(cfg.resolve_path("guidelines.file"));
    return rt;
}

}  // namespace memrec
