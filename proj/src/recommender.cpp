#include "memrec/recommender.hpp"

#include "memrec/error.hpp"
#include "memrec/text.hpp"

#include <nlohmann/json.hpp>

#include <set>

namespace memrec {

using ojson = nlohmann::ordered_json;

std::string_view to_string(Provenance p) {
    switch (p) {
        case Provenance::ExpertCandidate: return "expert_candidate";
        case Provenance::LlmSupplement: return "llm_supplement";
        case Provenance::FallbackPad: return "fallback_pad";
    }
    return "fallback_pad";
}

std::string_view to_string(MemoryMode m) {
    switch (m) {
        case MemoryMode::All: return "all";
        case MemoryMode::Rand: return "rand";
        case MemoryMode::Sim: return "sim";
        case MemoryMode::Ours: return "ours";
    }
    return "ours";
}

std::string render_memory_block(const RetrievedMemory& retrieved) {
    ojson j = ojson::object();
    for (std::size_t i = 0; i < retrieved.entities.size(); ++i) j[retrieved.entities[i]] = retrieved.attitudes[i];
    return j.dump();
}

std::string render_expert_block(const std::vector<std::string>& expert, const Catalog& catalog) {
    ojson j = ojson::array();
    for (const auto& id : expert) j.push_back(catalog.title_of(id));
    return j.dump();
}

std::string render_guideline_block(const std::vector<std::string>& guidelines) {
    if (guidelines.empty()) return "(none)";
    std::string out;
    for (std::size_t i = 0; i < guidelines.size(); ++i) {
        if (i) out += '\n';
        out += std::to_string(i + 1) + ". " + guidelines[i];
    }
    return out;
}

RecommendationResult recommend(const RecommendationRequest& req, const Catalog& catalog, LanguageModelPort& llm,
                               const TemplateSet& templates) {
    if (req.list_length < 1) throw Error(ErrorKind::InvalidArgument, "list_length must be at least 1");
    auto prompt = templates.make(
        TemplateKind::Recommend,
        {{"conversation", render_conversation(req.context)},
         {"guidelines", render_guideline_block(req.guidelines)},
         {"memory", render_memory_block(req.retrieved)},
         {"candidates", render_expert_block(req.expert, catalog)},
         {"list_length", std::to_string(req.list_length)},
         {"reply_request", req.want_reply ? std::string(" Wrap it as a JSON object {\"items\": [...], \"reply\": \"...\"} where "
                                                        "reply is a one-paragraph answer to the user.")
                                          : std::string{}}});

    RecommendationResult result;
    result.prompt = prompt.text;
    auto mentioned = mentioned_items(req.context);
    std::set<std::string> used(mentioned.begin(), mentioned.end());
    std::set<std::string> expert_set(req.expert.begin(), req.expert.end());
    auto push = [&](const std::string& id, Provenance p) {
        if (result.items.size() >= req.list_length || !used.insert(id).second) return false;
        result.items.push_back(id);
        result.provenance.push_back(p);
        return true;
    };

    try {
        auto out = complete(llm, prompt, OutputKind::ItemList);
        result.trajectory = prompt.text + "\n\n### Model output\n" + out.raw;
        result.reply = out.text;
        for (const auto& title : out.list) {
            auto id = catalog.resolve(title);
            if (!id || used.count(*id)) {
                result.dropped.push_back(title);
                continue;
            }
            push(*id, expert_set.count(*id) ? Provenance::ExpertCandidate : Provenance::LlmSupplement);
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ParseFailure) throw;
        result.degraded = true;
        result.trajectory = prompt.text + "\n\n### Model output\n" + e.detail();
    }
    for (const auto& id : req.expert) push(id, Provenance::FallbackPad);
    for (const auto& id : req.fallback_pool) {
        if (result.items.size() >= req.list_length) break;
        if (catalog.contains(id)) push(id, Provenance::FallbackPad);
    }
    return result;
}

std::uint64_t point_seed(std::uint64_t seed, const EvaluationPoint& point) {
    std::string key = point.user_id + '\x1f' + point.session_id + '\x1f' + std::to_string(point.turn_index);
    return fnv1a64(key, 0xcbf29ce484222325ULL ^ seed);
}

PipelineOutput run_pipeline(const EvaluationPoint& point, const Catalog& catalog, MemoryBank* bank, const GuidelineSet& guidelines,
                            const PipelinePorts& ports, const PipelineConfig& cfg, const PipelineSwitches& switches) {
    PipelineOutput out;
    if (switches.use_memory && bank && !bank->empty() && !point.context.empty()) {
        switch (switches.memory_mode) {
            case MemoryMode::Ours:
                out.retrieved = retrieve(*bank, point.context, ports.llm, ports.embedder, cfg.retrieval, ports.templates);
                break;
            case MemoryMode::All: out.retrieved = retrieve_all(*bank); break;
            case MemoryMode::Rand: out.retrieved = retrieve_random(*bank, cfg.retrieval.q, point_seed(cfg.seed, point)); break;
            case MemoryMode::Sim: out.retrieved = retrieve_similar(*bank, point.context, ports.embedder, cfg.retrieval.q); break;
        }
    }
    if (switches.use_expert && ports.expert) {
        ExpertQuery query{point.user_id, point.session_id, point.turn_index, point.context};
        out.expert = expert_candidates(*ports.expert, query, catalog);
    }
    out.expert_block = render_expert_block(out.expert, catalog);

    RecommendationRequest req;
    req.user_id = point.user_id;
    req.context = point.context;
    req.retrieved = out.retrieved;
    req.expert = out.expert;
    if (switches.use_guidelines) req.guidelines = guidelines.guidelines;
    req.list_length = cfg.list_length;
    req.want_reply = cfg.want_reply;
    for (const auto& [id, _] : catalog.items()) req.fallback_pool.push_back(id);
    out.result = recommend(req, catalog, ports.llm, ports.templates);
    return out;
}

}  // namespace memrec
