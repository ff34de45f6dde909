#include "memrec/llm.hpp"

#include "memrec/error.hpp"
#include "memrec/http_client.hpp"
#include "memrec/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace memrec {

using ojson = nlohmann::ordered_json;

// --- parsing ---------------------------------------------------------------

std::optional<std::string_view> first_balanced_json(std::string_view raw) {
    auto start = raw.find_first_of("{[");
    if (start == std::string_view::npos) return std::nullopt;
    std::vector<char> closers;
    bool in_string = false;
    for (std::size_t i = start; i < raw.size(); ++i) {
        char c = raw[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        switch (c) {
            case '"': in_string = true; break;
            case '{': closers.push_back('}'); break;
            case '[': closers.push_back(']'); break;
            case '}':
            case ']':
                if (closers.empty() || closers.back() != c) return std::nullopt;
                closers.pop_back();
                if (closers.empty()) return raw.substr(start, i - start + 1);
                break;
            default: break;
        }
    }
    return std::nullopt;
}

namespace {

std::optional<ojson> parse_slice(std::string_view raw) {
    auto slice = first_balanced_json(raw);
    if (!slice) return std::nullopt;
    auto j = ojson::parse(*slice, nullptr, false);
    if (j.is_discarded()) return std::nullopt;
    return j;
}

std::optional<std::vector<std::string>> unique_strings(const ojson& arr) {
    if (!arr.is_array()) return std::nullopt;
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& v : arr) {
        if (!v.is_string()) return std::nullopt;
        auto s = v.get<std::string>();
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

std::string_view trim_view(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

}  // namespace

std::optional<StructuredOutput> parse_structured(std::string_view raw, OutputKind kind) {
    StructuredOutput out;
    out.kind = kind;
    out.raw = std::string(raw);
    switch (kind) {
        case OutputKind::EntityAttitudeMap: {
            auto j = parse_slice(raw);
            if (!j || !j->is_object()) return std::nullopt;
            for (const auto& [k, v] : j->items()) {
                if (!v.is_string()) return std::nullopt;
                out.pairs.emplace_back(k, v.get<std::string>());
            }
            return out;
        }
        case OutputKind::EntityList: {
            auto j = parse_slice(raw);
            if (!j) return std::nullopt;
            auto list = unique_strings(*j);
            if (!list) return std::nullopt;
            out.list = std::move(*list);
            return out;
        }
        case OutputKind::ItemList:
        case OutputKind::GuidelineSet: {
            auto j = parse_slice(raw);
            if (!j) return std::nullopt;
            const char* field = kind == OutputKind::ItemList ? "items" : "guidelines";
            const ojson* arr = &*j;
            if (j->is_object()) {
                auto it = j->find(field);
                if (it == j->end()) return std::nullopt;
                arr = &*it;
                if (kind == OutputKind::ItemList) {
                    if (auto r = j->find("reply"); r != j->end()) {
                        if (!r->is_string()) return std::nullopt;
                        out.text = r->get<std::string>();
                    }
                }
            }
            auto list = unique_strings(*arr);
            if (!list) return std::nullopt;
            out.list = std::move(*list);
            return out;
        }
        case OutputKind::MergedAttitude: {
            if (auto j = parse_slice(raw); j && j->is_object()) {
                auto it = j->find("attitude");
                if (it != j->end() && it->is_string() && !trim_view(it->get_ref<const std::string&>()).empty()) {
                    out.text = std::string(trim_view(it->get_ref<const std::string&>()));
                    return out;
                }
            }
            auto text = trim_view(raw);
            if (text.starts_with("```")) {
                auto nl = text.find('\n');
                text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
                if (auto fence = text.rfind("```"); fence != std::string_view::npos) text = text.substr(0, fence);
                text = trim_view(text);
            }
            if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
                auto j = ojson::parse(text, nullptr, false);
                if (!j.is_discarded() && j.is_string()) {
                    out.text = j.get<std::string>();
                    if (trim_view(out.text).empty()) return std::nullopt;
                    return out;
                }
            }
            if (text.empty() || text.front() == '{' || text.front() == '[') return std::nullopt;
            out.text = std::string(text);
            return out;
        }
    }
    return std::nullopt;
}

// --- complete ----------------------------------------------------------------

namespace {

std::array<std::atomic<std::size_t>, kAllTemplateKinds.size() + 1> g_audit{};

std::size_t audit_slot(std::optional<TemplateKind> kind) {
    return kind ? static_cast<std::size_t>(*kind) : kAllTemplateKinds.size();
}

}  // namespace

void CallAudit::record(std::optional<TemplateKind> kind) { ++g_audit[audit_slot(kind)]; }
std::size_t CallAudit::count(TemplateKind kind) { return g_audit[audit_slot(kind)].load(); }
std::size_t CallAudit::total() {
    std::size_t n = 0;
    for (const auto& c : g_audit) n += c.load();
    return n;
}
void CallAudit::reset() {
    for (auto& c : g_audit) c.store(0);
}

StructuredOutput complete(LanguageModelPort& port, const Prompt& prompt, OutputKind expected) {
    std::string raw;
    for (std::size_t attempt = 0; attempt <= port.retry_budget(); ++attempt) {
        CallAudit::record(prompt.kind);
        const std::string& text = attempt == 0 || prompt.repair_text.empty() ? prompt.text : prompt.repair_text;
        raw = port.generate(prompt, text);
        if (auto parsed = parse_structured(raw, expected)) return std::move(*parsed);
    }
    throw Error(ErrorKind::ParseFailure, "model output could not be parsed", raw);
}

// --- mock ----------------------------------------------------------------------

bool is_negative_attitude(std::string_view attitude) {
    static const std::vector<std::string> markers{"dislike", "hate", "not ", "n't", "never", "avoid", "can't stand",
                                                  "cannot stand", "no longer", "bored", "boring"};
    auto text = canonicalize(attitude);
    text.push_back(' ');
    return std::any_of(markers.begin(), markers.end(), [&](const std::string& m) { return text.find(m) != std::string::npos; });
}

std::string mock_merge_rule(std::string_view existing, std::string_view incoming) {
    auto old_c = canonicalize(existing);
    auto new_c = canonicalize(incoming);
    if (new_c.empty() || old_c == new_c) return std::string(existing);
    if (old_c.empty()) return std::string(incoming);
    if (is_negative_attitude(existing) != is_negative_attitude(incoming)) return std::string(incoming);
    if (old_c.find(new_c) != std::string::npos) return std::string(existing);
    return std::string(existing) + "; " + std::string(incoming);
}

MockKnowledge MockKnowledge::from_corpus(const Corpus& corpus) {
    MockKnowledge k;
    k.catalog = corpus.catalog;
    for (const auto& [_, user] : corpus.users) {
        for (const auto& s : user.sessions) {
            for (const auto& u : s.utterances) {
                if (!u.annotations.empty()) k.annotate(u.text, u.annotations);
            }
        }
    }
    return k;
}

void MockKnowledge::annotate(std::string_view utterance, EntityAttitudes pairs) {
    annotations[canonicalize(utterance)] = std::move(pairs);
}

MockLlm::MockLlm(MockKnowledge knowledge, std::vector<MockStub> stubs, std::uint64_t seed)
    : knowledge_(std::move(knowledge)), stubs_(std::move(stubs)), seed_(seed) {}

std::unique_ptr<MockLlm> mock_program(std::vector<MockStub> stubs, MockKnowledge knowledge, std::uint64_t seed) {
    return std::make_unique<MockLlm>(std::move(knowledge), std::move(stubs), seed);
}

std::string MockLlm::fixed_guideline() {
    return "Rank expert candidates that match the retrieved user preferences first.";
}

std::string MockLlm::generate(const Prompt& prompt, std::string_view text) {
    ++raw_calls_;
    if (unavailable_) throw Error(ErrorKind::LlmUnavailable, "mock model is offline");
    for (const auto& stub : stubs_) {
        if (stub.kind && stub.kind != prompt.kind) continue;
        if (text.find(stub.pattern) != std::string_view::npos) return stub.response;
    }
    if (!prompt.kind) return std::string(text);
    auto slot = [&](const char* name) -> std::string {
        auto it = prompt.slots.find(name);
        return it == prompt.slots.end() ? std::string{} : it->second;
    };
    switch (*prompt.kind) {
        case TemplateKind::Add: return default_add(prompt);
        case TemplateKind::Merge: {
            ojson j;
            j["attitude"] = mock_merge_rule(slot("existing_attitude"), slot("new_attitude"));
            return j.dump();
        }
        case TemplateKind::Retrieve: return default_retrieve(prompt);
        case TemplateKind::Recommend: return default_recommend(prompt);
        case TemplateKind::Reflect: return default_reflect(prompt);
    }
    return std::string(text);
}

namespace {

std::vector<std::string> conversation_lines(const std::string& conversation) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= conversation.size()) {
        auto end = conversation.find('\n', pos);
        if (end == std::string::npos) end = conversation.size();
        std::string line = conversation.substr(pos, end - pos);
        for (std::string_view prefix : {"User: ", "System: "}) {
            if (line.starts_with(prefix)) {
                line.erase(0, prefix.size());
                break;
            }
        }
        if (!line.empty()) lines.push_back(std::move(line));
        pos = end + 1;
    }
    return lines;
}

std::vector<std::string> json_string_list(const std::string& text) {
    auto j = ojson::parse(text, nullptr, false);
    std::vector<std::string> out;
    if (j.is_discarded() || !j.is_array()) return out;
    for (const auto& v : j) {
        if (v.is_string()) out.push_back(v.get<std::string>());
    }
    return out;
}

}  // namespace

std::string MockLlm::default_add(const Prompt& prompt) const {
    ojson out = ojson::object();
    auto it = prompt.slots.find("conversation");
    if (it == prompt.slots.end()) return out.dump();
    for (const auto& line : conversation_lines(it->second)) {
        auto found = knowledge_.annotations.find(canonicalize(line));
        if (found == knowledge_.annotations.end()) continue;
        for (const auto& [entity, attitude] : found->second) out[entity] = attitude;
    }
    return out.dump();
}

std::string MockLlm::default_retrieve(const Prompt& prompt) const {
    auto slot = [&](const char* name) {
        auto it = prompt.slots.find(name);
        return it == prompt.slots.end() ? std::string{} : it->second;
    };
    std::size_t q = 1;
    try {
        q = static_cast<std::size_t>(std::max(1L, std::stol(slot("q"))));
    } catch (const std::exception&) {
    }
    std::set<std::string> context_tokens;
    for (const auto& line : conversation_lines(slot("conversation"))) {
        for (auto& t : word_tokens(line)) context_tokens.insert(std::move(t));
    }
    struct Scored {
        std::string entity;
        std::size_t overlap;
        std::size_t order;
    };
    std::vector<Scored> scored;
    auto candidates = json_string_list(slot("entities"));
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        auto tokens = word_tokens(candidates[i]);
        std::set<std::string> distinct(tokens.begin(), tokens.end());
        std::size_t overlap = std::count_if(distinct.begin(), distinct.end(), [&](const std::string& t) { return context_tokens.count(t) != 0; });
        if (overlap > 0) scored.push_back({candidates[i], overlap, i});
    }
    std::stable_sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.overlap > b.overlap; });
    ojson out = ojson::array();
    for (std::size_t i = 0; i < scored.size() && i < q; ++i) out.push_back(scored[i].entity);
    return out.dump();
}

std::string MockLlm::default_recommend(const Prompt& prompt) const {
    auto slot = [&](const char* name) {
        auto it = prompt.slots.find(name);
        return it == prompt.slots.end() ? std::string{} : it->second;
    };
    std::vector<std::pair<std::string, int>> entities;  // canonical entity, polarity
    auto memory = ojson::parse(slot("memory"), nullptr, false);
    if (!memory.is_discarded() && memory.is_object()) {
        for (const auto& [entity, attitude] : memory.items()) {
            int polarity = attitude.is_string() && is_negative_attitude(attitude.get<std::string>()) ? -1 : 1;
            entities.emplace_back(canonicalize(entity), polarity);
        }
    }
    auto association = [&](const CatalogItem& item) {
        int score = 0;
        auto title = canonicalize(item.title);
        for (const auto& [entity, polarity] : entities) {
            bool hit = entity == title;
            for (const auto& [_, value] : item.attrs) hit = hit || entity == canonicalize(value);
            if (hit) score += polarity;
        }
        return score;
    };

    std::vector<std::string> titles;
    auto candidates = json_string_list(slot("candidates"));
    if (!candidates.empty()) {
        std::vector<std::pair<std::string, int>> scored;
        for (const auto& title : candidates) {
            int score = 0;
            if (auto id = knowledge_.catalog.resolve(title)) score = association(*knowledge_.catalog.find(*id));
            scored.emplace_back(title, score);
        }
        std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        for (auto& [title, _] : scored) titles.push_back(std::move(title));
    } else {
        for (const auto& [_, item] : knowledge_.catalog.items()) {
            if (association(item) > 0) titles.push_back(item.title);
        }
    }

    ojson list(titles);
    if (slot("reply_request").empty()) return list.dump();
    std::string named;
    for (std::size_t i = 0; i < titles.size() && i < 3; ++i) {
        if (i) named += i + 1 == std::min<std::size_t>(titles.size(), 3) ? " and " : ", ";
        named += titles[i];
    }
    static const char* const openers[] = {"You might enjoy ", "How about ", "I think you would like "};
    ojson out;
    out["items"] = std::move(list);
    out["reply"] = titles.empty() ? std::string("Could you tell me a bit more about what you are in the mood for?")
                                  : std::string(openers[seed_ % 3]) + named + ".";
    return out.dump();
}

std::string MockLlm::default_reflect(const Prompt& prompt) const {
    auto it = prompt.slots.find("guidelines");
    std::vector<std::string> current = it == prompt.slots.end() ? std::vector<std::string>{} : json_string_list(it->second);
    if (std::find(current.begin(), current.end(), fixed_guideline()) == current.end()) current.push_back(fixed_guideline());
    return ojson(current).dump();
}

// --- HTTP ----------------------------------------------------------------------

HttpLlm::HttpLlm(HttpLlmOptions options)
    : options_(std::move(options)), in_flight_(static_cast<std::ptrdiff_t>(std::clamp<std::size_t>(options_.max_in_flight, 1, 1024))) {}

std::string HttpLlm::request_body(std::string_view text) const {
    ojson body;
    body["model"] = options_.model;
    body["messages"] = ojson::array({ojson{{"role", "user"}, {"content", std::string(text)}}});
    body["temperature"] = 0;
    return body.dump();
}

std::string HttpLlm::generate(const Prompt&, std::string_view text) {
    in_flight_.acquire();
    struct Release {
        std::counting_semaphore<1024>& s;
        ~Release() { s.release(); }
    } release{in_flight_};
    auto body = post_json(options_.endpoint, "/v1/chat/completions", request_body(text), options_.api_key, options_.timeout_seconds);
    auto j = ojson::parse(body, nullptr, false);
    if (j.is_discarded()) throw Error(ErrorKind::LlmUnavailable, "chat endpoint returned non-JSON", body);
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
        throw Error(ErrorKind::LlmUnavailable, "chat endpoint response lacks choices[0].message.content", body);
    }
}

}  // namespace memrec
