#include "memrec/memory_bank.hpp"

#include "memrec/error.hpp"
#include "memrec/io.hpp"
#include "memrec/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace memrec {

using ojson = nlohmann::ordered_json;

std::string MemoryBank::key_for(std::string_view entity) const {
    auto key = canonicalize(entity);
    if (key.empty() || !resolver_) return key;
    return resolver_(key, *this);
}

bool MemoryBank::contains(std::string_view entity) const {
    auto key = key_for(entity);
    return !key.empty() && entries_.count(key) != 0;
}

const MemoryEntry* MemoryBank::find(std::string_view entity) const {
    auto it = entries_.find(key_for(entity));
    return it == entries_.end() ? nullptr : &it->second;
}

void MemoryBank::write(const std::string& key, std::string attitude, Tick at) {
    auto& e = entries_[key];
    e.entity = key;
    e.attitude = std::move(attitude);
    e.last_touched = std::max(e.last_touched, at);
}

void MemoryBank::restore_state(std::map<std::string, MemoryEntry> entries, Tick clock) {
    entries_ = std::move(entries);
    clock_ = clock;
}

MergeOutcome merge_attitude(MemoryBank& bank, std::string_view entity, std::string_view new_attitude, LanguageModelPort& llm,
                            const TemplateSet& templates) {
    auto key = bank.key_for(entity);
    const MemoryEntry* existing = bank.find(entity);
    if (!existing) throw Error(ErrorKind::EntityNotFound, "no memory entry for '" + std::string(entity) + "'");
    auto prompt = templates.make(TemplateKind::Merge, {{"entity", key},
                                                       {"existing_attitude", existing->attitude},
                                                       {"new_attitude", std::string(new_attitude)}});
    MergeOutcome outcome;
    try {
        outcome.attitude = complete(llm, prompt, OutputKind::MergedAttitude).text;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ParseFailure) throw;
        outcome.attitude = existing->attitude + "; " + std::string(new_attitude);
        outcome.degraded = true;
    }
    bank.write(key, outcome.attitude, bank.advance_clock());
    return outcome;
}

AddReport extract_and_add(MemoryBank& bank, const DialogueSession& session, LanguageModelPort& llm, const TemplateSet& templates) {
    AddReport report;
    auto prompt = templates.make(TemplateKind::Add, {{"conversation", render_conversation(session.utterances)}});
    StructuredOutput out;
    try {
        out = complete(llm, prompt, OutputKind::EntityAttitudeMap);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::ParseFailure) throw;
        report.skipped = true;
        report.error = e.what();
        return report;
    }
    report.extracted = out.pairs.size();
    if (out.pairs.empty()) return report;

    // A failing merge call must not leave half a session in the bank.
    MemoryBank snapshot = bank;
    try {
        const Tick generated = bank.advance_clock();
        for (const auto& [entity, attitude] : out.pairs) {
            auto key = bank.key_for(entity);
            if (key.empty() || attitude.empty()) continue;
            if (bank.entries().count(key)) {
                auto merged = merge_attitude(bank, key, attitude, llm, templates);
                ++report.merged;
                if (merged.degraded) ++report.degraded_merges;
            } else {
                bank.write(key, attitude, generated);
                ++report.added;
            }
            report.touched.push_back(key);
        }
    } catch (...) {
        bank = std::move(snapshot);
        throw;
    }
    return report;
}

std::vector<std::string> delete_stale(MemoryBank& bank, Tick threshold) {
    if (threshold == 0) throw Error(ErrorKind::InvalidArgument, "delete threshold must be positive");
    std::vector<std::string> removed;
    for (const auto& [key, entry] : bank.entries()) {
        if (bank.clock() - entry.last_touched > threshold) removed.push_back(key);
    }
    for (const auto& key : removed) bank.erase(key);
    return removed;
}

std::vector<std::pair<std::string, std::string>> read_attitudes(MemoryBank& bank, const std::vector<std::string>& entities) {
    std::vector<std::pair<std::string, std::string>> out;
    std::vector<std::string> keys;
    for (const auto& e : entities) {
        auto key = bank.key_for(e);
        auto it = bank.entries().find(key);
        if (it == bank.entries().end()) continue;
        out.emplace_back(key, it->second.attitude);
        keys.push_back(key);
    }
    if (!keys.empty()) {
        const Tick now = bank.advance_clock();
        for (const auto& key : keys) {
            auto attitude = bank.entries().at(key).attitude;
            bank.write(key, std::move(attitude), now);
        }
    }
    return out;
}

// --- store ---------------------------------------------------------------------

std::string encode_user_id(std::string_view user_id) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : user_id) {
        if (std::isalnum(c) || c == '_' || c == '-' || (c == '.' && !out.empty())) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

std::string decode_user_id(std::string_view encoded) {
    std::string out;
    for (std::size_t i = 0; i < encoded.size(); ++i) {
        if (encoded[i] == '%' && i + 2 < encoded.size() && std::isxdigit(static_cast<unsigned char>(encoded[i + 1])) &&
            std::isxdigit(static_cast<unsigned char>(encoded[i + 2]))) {
            out.push_back(static_cast<char>(std::stoi(std::string(encoded.substr(i + 1, 2)), nullptr, 16)));
            i += 2;
        } else {
            out.push_back(encoded[i]);
        }
    }
    return out;
}

std::filesystem::path MemoryStore::entries_path(const std::string& user_id) const {
    return root_ / (encode_user_id(user_id) + ".mem.jsonl");
}

std::filesystem::path MemoryStore::clock_path(const std::string& user_id) const {
    return root_ / (encode_user_id(user_id) + ".mem.clock.json");
}

void MemoryStore::persist(const MemoryBank& bank) const {
    std::string lines;
    for (const auto& [_, e] : bank.entries()) {
        ojson j;
        j["entity"] = e.entity;
        j["attitude"] = e.attitude;
        j["last_touched"] = e.last_touched;
        lines += j.dump();
        lines += '\n';
    }
    ojson clock;
    clock["clock"] = bank.clock();
    write_text_file_atomic(entries_path(bank.user_id()), lines);
    write_text_file_atomic(clock_path(bank.user_id()), clock.dump() + "\n");
}

MemoryBank MemoryStore::restore(const std::string& user_id) const {
    MemoryBank bank(user_id);
    const auto entries_file = entries_path(user_id);
    const auto clock_file = clock_path(user_id);
    std::error_code ec;
    if (!std::filesystem::exists(entries_file, ec) && !std::filesystem::exists(clock_file, ec)) return bank;

    auto corrupt = [&](const std::string& what, std::size_t line_no = 0) {
        return Error(ErrorKind::CorruptRecord, entries_file.string() + ": " + what, {}, line_no);
    };
    Tick clock = 0;
    if (std::filesystem::exists(clock_file, ec)) {
        auto j = ojson::parse(read_text_file(clock_file), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("clock") || !j["clock"].is_number_unsigned()) {
            throw Error(ErrorKind::CorruptRecord, clock_file.string() + ": bad clock sidecar");
        }
        clock = j["clock"].get<Tick>();
    }
    std::map<std::string, MemoryEntry> entries;
    if (std::filesystem::exists(entries_file, ec)) {
        auto text = read_text_file(entries_file);
        std::size_t pos = 0;
        std::size_t line_no = 0;
        while (pos < text.size()) {
            auto end = text.find('\n', pos);
            if (end == std::string::npos) end = text.size();
            ++line_no;
            std::string_view line(text.data() + pos, end - pos);
            pos = end + 1;
            if (line.empty()) continue;
            auto j = ojson::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object()) throw corrupt("line is not a JSON object", line_no);
            auto e_it = j.find("entity");
            auto a_it = j.find("attitude");
            auto t_it = j.find("last_touched");
            if (e_it == j.end() || !e_it->is_string() || a_it == j.end() || !a_it->is_string() || t_it == j.end() ||
                !t_it->is_number_unsigned()) {
                throw corrupt("record needs entity, attitude and last_touched", line_no);
            }
            MemoryEntry e{e_it->get<std::string>(), a_it->get<std::string>(), t_it->get<Tick>()};
            if (e.entity.empty()) throw corrupt("empty entity", line_no);
            if (e.last_touched > clock) throw corrupt("last_touched is ahead of the clock", line_no);
            if (!entries.emplace(e.entity, e).second) throw corrupt("duplicate entity '" + e.entity + "'", line_no);
        }
    }
    bank.restore_state(std::move(entries), clock);
    return bank;
}

std::vector<std::string> MemoryStore::users() const {
    std::vector<std::string> out;
    std::error_code ec;
    if (!std::filesystem::is_directory(root_, ec)) return out;
    const std::string suffix = ".mem.jsonl";
    for (const auto& entry : std::filesystem::directory_iterator(root_, ec)) {
        auto name = entry.path().filename().string();
        if (name.size() > suffix.size() && name.ends_with(suffix)) {
            out.push_back(decode_user_id(name.substr(0, name.size() - suffix.size())));
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace memrec
