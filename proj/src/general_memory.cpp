#include "memrec/general_memory.hpp"

#include "memrec/error.hpp"
#include "memrec/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

namespace memrec {

using ojson = nlohmann::ordered_json;

CoVisitExpert CoVisitExpert::train(const Corpus& corpus, std::size_t candidate_count) {
    CoVisitExpert expert(candidate_count);
    std::size_t train_sessions = 0;
    for (const auto& [_, user] : corpus.users) {
        for (const auto& session : user.sessions) {
            if (corpus.split_of(session.session_id) != Split::Train) continue;
            ++train_sessions;
            std::set<std::string> items;
            for (const auto& u : session.utterances) {
                items.insert(u.mentioned_items.begin(), u.mentioned_items.end());
                items.insert(u.ground_truth_items.begin(), u.ground_truth_items.end());
            }
            for (const auto& a : items) {
                ++expert.popularity_[a];
                for (const auto& b : items) {
                    if (a != b) ++expert.pairs_[a][b];
                }
            }
        }
    }
    expert.popularity_only_ = train_sessions == 0;
    for (const auto& [id, _] : corpus.catalog.items()) expert.by_popularity_.push_back(id);
    std::stable_sort(expert.by_popularity_.begin(), expert.by_popularity_.end(),
                     [&](const std::string& a, const std::string& b) { return expert.popularity(a) > expert.popularity(b); });
    return expert;
}

std::size_t CoVisitExpert::pair_count(const std::string& a, const std::string& b) const {
    auto it = pairs_.find(a);
    if (it == pairs_.end()) return 0;
    auto jt = it->second.find(b);
    return jt == it->second.end() ? 0 : jt->second;
}

std::size_t CoVisitExpert::popularity(const std::string& item) const {
    auto it = popularity_.find(item);
    return it == popularity_.end() ? 0 : it->second;
}

std::vector<std::string> CoVisitExpert::rank(const ExpertQuery& query) const {
    auto mentioned = mentioned_items(query.context);
    if (mentioned.empty()) return by_popularity_;
    std::map<std::string, std::size_t> score;
    for (const auto& m : mentioned) {
        auto it = pairs_.find(m);
        if (it == pairs_.end()) continue;
        for (const auto& [other, count] : it->second) score[other] += count;
    }
    std::vector<std::string> scored;
    for (const auto& [id, _] : score) scored.push_back(id);
    std::sort(scored.begin(), scored.end(), [&](const std::string& a, const std::string& b) {
        if (score[a] != score[b]) return score[a] > score[b];
        if (popularity(a) != popularity(b)) return popularity(a) > popularity(b);
        return a < b;
    });
    for (const auto& id : by_popularity_) {
        if (!score.count(id)) scored.push_back(id);
    }
    return scored;
}

ExternalExpert ExternalExpert::parse(std::string_view jsonl, std::size_t candidate_count) {
    ExternalExpert expert(candidate_count);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < jsonl.size()) {
        auto end = jsonl.find('\n', pos);
        if (end == std::string_view::npos) end = jsonl.size();
        ++line_no;
        auto line = jsonl.substr(pos, end - pos);
        pos = end + 1;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
        auto j = ojson::parse(line, nullptr, false);
        try {
            if (j.is_discarded()) throw std::runtime_error("not JSON");
            auto key = std::make_tuple(j.at("user_id").get<std::string>(), j.at("session_id").get<std::string>(),
                                       j.at("turn_index").get<int>());
            expert.table_[key] = j.at("candidates").get<std::vector<std::string>>();
        } catch (const std::exception&) {
            throw Error(ErrorKind::MalformedRecord, "candidate file line " + std::to_string(line_no), {}, line_no);
        }
    }
    return expert;
}

ExternalExpert ExternalExpert::load(const std::filesystem::path& path, std::size_t candidate_count) {
    return parse(read_text_file(path), candidate_count);
}

std::vector<std::string> ExternalExpert::rank(const ExpertQuery& query) const {
    auto it = table_.find(std::make_tuple(query.user_id, query.session_id, query.turn_index));
    return it == table_.end() ? std::vector<std::string>{} : it->second;
}

std::vector<std::string> expert_candidates(const ExpertModel& expert, const ExpertQuery& query, const Catalog& catalog) {
    auto mentioned = mentioned_items(query.context);
    std::set<std::string> excluded(mentioned.begin(), mentioned.end());
    std::vector<std::string> out;
    for (auto& id : expert.rank(query)) {
        if (out.size() >= expert.candidate_count()) break;
        if (!catalog.contains(id) || !excluded.insert(id).second) continue;
        out.push_back(std::move(id));
    }
    return out;
}

GuidelineSet seed_manual_guidelines() {
    GuidelineSet set;
    set.guidelines = {"Let's think step by step", "Consider user's needs during conversations"};
    return set;
}

ReflectResult reflect(const GuidelineSet& current, const ReflectionRecord& record, LanguageModelPort& llm,
                      const TemplateSet& templates) {
    std::string outcome = record.outcome == Outcome::Hit ? "success (the user accepted a recommended item)"
                                                         : "failure (the user accepted none of the recommended items)";
    if (!record.response.empty()) outcome += ". User response: " + record.response;
    auto prompt = templates.make(TemplateKind::Reflect, {{"guidelines", ojson(current.guidelines).dump()},
                                                         {"trajectory", record.trajectory},
                                                         {"outcome", outcome},
                                                         {"cap", std::to_string(current.cap)}});
    ReflectResult result;
    result.guidelines = current;
    try {
        auto out = complete(llm, prompt, OutputKind::GuidelineSet);
        auto& list = out.list;
        if (list.size() > current.cap) list.erase(list.begin(), list.end() - static_cast<std::ptrdiff_t>(current.cap));
        result.guidelines.guidelines = std::move(list);
        ++result.guidelines.version;
        result.updated = true;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ParseFailure) throw;
        result.error = e.what();
    }
    return result;
}

std::shared_ptr<const GuidelineSet> GuidelineStore::snapshot() const {
    std::lock_guard lock(read_mutex_);
    return current_;
}

void GuidelineStore::publish(GuidelineSet next) {
    auto ptr = std::make_shared<const GuidelineSet>(std::move(next));
    std::lock_guard lock(read_mutex_);
    current_ = std::move(ptr);
}

ReflectResult GuidelineStore::reflect_and_publish(const ReflectionRecord& record, LanguageModelPort& llm,
                                                  const TemplateSet& templates) {
    std::lock_guard writer(write_mutex_);
    auto base = snapshot();
    auto result = reflect(*base, record, llm, templates);
    if (result.updated) publish(result.guidelines);
    return result;
}

std::string guidelines_to_json(const GuidelineSet& set) {
    ojson j;
    j["version"] = set.version;
    j["cap"] = set.cap;
    j["guidelines"] = set.guidelines;
    return j.dump(2) + "\n";
}

GuidelineSet guidelines_from_json(std::string_view text) {
    auto j = ojson::parse(text, nullptr, false);
    try {
        if (j.is_discarded()) throw std::runtime_error("not JSON");
        GuidelineSet set;
        set.version = j.at("version").get<std::uint64_t>();
        set.cap = j.value("cap", std::size_t{10});
        set.guidelines = j.at("guidelines").get<std::vector<std::string>>();
        if (set.cap < 1 || set.guidelines.size() > set.cap) throw std::runtime_error("guideline count exceeds cap");
        return set;
    } catch (const std::exception& e) {
        throw Error(ErrorKind::CorruptRecord, std::string("guideline file: ") + e.what());
    }
}

void save_guidelines(const GuidelineSet& set, const std::filesystem::path& path) {
    write_text_file_atomic(path, guidelines_to_json(set));
}

GuidelineSet load_guidelines(const std::filesystem::path& path) {
    return guidelines_from_json(read_text_file(path));
}

}  // namespace memrec
