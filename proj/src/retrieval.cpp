#include "memrec/retrieval.hpp"

#include "memrec/error.hpp"
#include "memrec/http_client.hpp"
#include "memrec/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

namespace memrec {

namespace {

void normalize(Embedding& e) {
    double norm = 0.0;
    for (double v : e.values) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        e.zero = true;
        return;
    }
    for (double& v : e.values) v /= norm;
}

RetrievedMemory read_back(MemoryBank& bank, std::vector<std::string> entities) {
    RetrievedMemory out;
    for (auto& [entity, attitude] : read_attitudes(bank, entities)) {
        out.entities.push_back(std::move(entity));
        out.attitudes.push_back(std::move(attitude));
    }
    return out;
}

}  // namespace

Embedding HashNgramEmbedder::embed(std::string_view text) const {
    Embedding e;
    e.values.assign(dimension_, 0.0);
    auto canonical = canonicalize(text);
    if (canonical.empty()) {
        e.zero = true;
        return e;
    }
    auto cps = decode_utf8(" " + canonical + " ");
    const std::size_t n = 3;
    auto add_gram = [&](std::size_t from, std::size_t len) {
        std::string gram;
        for (std::size_t i = from; i < from + len; ++i) gram += encode_utf8(cps[i]);
        const std::uint64_t h = fnv1a64(gram);
        const double sign = (h >> 63) != 0 ? -1.0 : 1.0;
        e.values[h % dimension_] += sign;
    };
    if (cps.size() < n) {
        add_gram(0, cps.size());
    } else {
        for (std::size_t i = 0; i + n <= cps.size(); ++i) add_gram(i, n);
    }
    normalize(e);
    return e;
}

HttpEmbedder::HttpEmbedder(std::string endpoint, std::string model, std::string api_key, std::size_t dimension, int timeout_seconds)
    : endpoint_(std::move(endpoint)), model_(std::move(model)), api_key_(std::move(api_key)), dimension_(dimension),
      timeout_seconds_(timeout_seconds) {}

Embedding HttpEmbedder::embed(std::string_view text) const {
    Embedding e;
    if (canonicalize(text).empty()) {
        e.values.assign(dimension_, 0.0);
        e.zero = true;
        return e;
    }
    nlohmann::json body{{"model", model_}, {"input", std::string(text)}};
    auto response = post_json(endpoint_, "/v1/embeddings", body.dump(), api_key_, timeout_seconds_);
    auto j = nlohmann::json::parse(response, nullptr, false);
    try {
        e.values = j.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::LlmUnavailable, "embedding endpoint response lacks data[0].embedding", response);
    }
    if (e.values.size() != dimension_) {
        throw Error(ErrorKind::DimensionMismatch, "embedding endpoint returned " + std::to_string(e.values.size()) +
                                                      " dimensions, expected " + std::to_string(dimension_));
    }
    normalize(e);
    return e;
}

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorKind::DimensionMismatch, std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

void RetrievalConfig::validate() const {
    if (q < 1 || prefilter_m < 1 || skip_prefilter_below < 1) {
        throw Error(ErrorKind::InvalidArgument, "retrieval counts must be at least 1");
    }
    if (q > prefilter_m) throw Error(ErrorKind::InvalidArgument, "q must not exceed prefilter_m");
}

std::string entry_embedding_text(const MemoryEntry& entry) {
    return entry.entity + " " + entry.attitude;
}

std::vector<ScoredEntity> similarity_ranking(const MemoryBank& bank, std::string_view context, const Embedder& embedder) {
    std::vector<ScoredEntity> scored;
    if (bank.empty()) return scored;
    const auto query = embedder.embed(context);
    scored.reserve(bank.size());
    for (const auto& [key, entry] : bank.entries()) {
        scored.push_back({key, cosine(embedder.embed(entry_embedding_text(entry)).values, query.values)});
    }
    std::sort(scored.begin(), scored.end(), [](const ScoredEntity& a, const ScoredEntity& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.entity < b.entity;
    });
    return scored;
}

std::vector<ScoredEntity> prefilter(const MemoryBank& bank, std::string_view context, const Embedder& embedder, std::size_t m,
                                    std::size_t skip_below) {
    std::vector<ScoredEntity> out;
    if (bank.size() <= skip_below) {
        for (const auto& [key, _] : bank.entries()) out.push_back({key, 1.0});
        return out;
    }
    out = similarity_ranking(bank, context, embedder);
    if (out.size() > m) out.resize(m);
    return out;
}

RetrievedMemory retrieve(MemoryBank& bank, std::span<const Utterance> context, LanguageModelPort& llm, const Embedder& embedder,
                         const RetrievalConfig& cfg, const TemplateSet& templates) {
    cfg.validate();
    if (bank.empty() || context.empty()) return {};
    auto candidates = prefilter(bank, conversation_text(context), embedder, cfg.prefilter_m, cfg.skip_prefilter_below);

    nlohmann::json candidate_list = nlohmann::json::array();
    std::set<std::string> allowed;
    for (const auto& c : candidates) {
        candidate_list.push_back(c.entity);
        allowed.insert(c.entity);
    }
    auto prompt = templates.make(TemplateKind::Retrieve, {{"q", std::to_string(cfg.q)},
                                                          {"entities", candidate_list.dump()},
                                                          {"conversation", render_conversation(context)}});
    std::vector<std::string> chosen;
    std::vector<std::string> rejected;
    bool degraded = false;
    try {
        auto out = complete(llm, prompt, OutputKind::EntityList);
        std::set<std::string> seen;
        for (const auto& name : out.list) {
            auto key = bank.key_for(name);
            if (!allowed.count(key)) {
                rejected.push_back(name);
                continue;
            }
            if (chosen.size() < cfg.q && seen.insert(key).second) chosen.push_back(key);
        }
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ParseFailure) throw;
        degraded = true;
        for (std::size_t i = 0; i < candidates.size() && i < cfg.q; ++i) chosen.push_back(candidates[i].entity);
    }
    auto result = read_back(bank, std::move(chosen));
    result.prefilter_scores = std::move(candidates);
    result.degraded = degraded;
    result.rejected = std::move(rejected);
    return result;
}

RetrievedMemory retrieve_all(MemoryBank& bank) {
    std::vector<std::string> keys;
    for (const auto& [key, _] : bank.entries()) keys.push_back(key);
    return read_back(bank, std::move(keys));
}

RetrievedMemory retrieve_random(MemoryBank& bank, std::size_t q, std::uint64_t seed) {
    std::vector<std::string> keys;
    for (const auto& [key, _] : bank.entries()) keys.push_back(key);
    std::mt19937_64 rng(seed);
    const std::size_t take = std::min(q, keys.size());
    for (std::size_t i = 0; i < take; ++i) {
        std::size_t j = i + static_cast<std::size_t>(rng() % (keys.size() - i));
        std::swap(keys[i], keys[j]);
    }
    keys.resize(take);
    return read_back(bank, std::move(keys));
}

RetrievedMemory retrieve_similar(MemoryBank& bank, std::span<const Utterance> context, const Embedder& embedder, std::size_t q) {
    if (bank.empty() || context.empty()) return {};
    auto ranked = similarity_ranking(bank, conversation_text(context), embedder);
    std::vector<std::string> keys;
    for (std::size_t i = 0; i < ranked.size() && i < q; ++i) keys.push_back(ranked[i].entity);
    auto out = read_back(bank, std::move(keys));
    out.prefilter_scores = std::move(ranked);
    return out;
}

}  // namespace memrec
