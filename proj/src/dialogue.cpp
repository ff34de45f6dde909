#include "memrec/dialogue.hpp"

#include "memrec/error.hpp"
#include "memrec/io.hpp"
#include "memrec/text.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

namespace memrec {

using ojson = nlohmann::ordered_json;

namespace {

// Howard Hinnant's days_from_civil.
constexpr std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m > 2 ? m - 3 : m + 9) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool read_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
    if (pos + n > s.size()) return false;
    int v = 0;
    for (std::size_t i = 0; i < n; ++i) {
        char c = s[pos + i];
        if (c < '0' || c > '9') return false;
        v = v * 10 + (c - '0');
    }
    out = v;
    return true;
}

[[noreturn]] void malformed(std::size_t line_no, const std::string& what) {
    throw Error(ErrorKind::MalformedRecord, "line " + std::to_string(line_no) + ": " + what, {}, line_no);
}

std::vector<std::string> string_array(const ojson& j, const char* key, std::size_t line_no, bool required) {
    std::vector<std::string> out;
    auto it = j.find(key);
    if (it == j.end()) {
        if (required) malformed(line_no, std::string("missing '") + key + "'");
        return out;
    }
    if (!it->is_array()) malformed(line_no, std::string("'") + key + "' must be an array");
    std::set<std::string> seen;
    for (const auto& v : *it) {
        if (!v.is_string()) malformed(line_no, std::string("'") + key + "' entries must be strings");
        auto s = v.get<std::string>();
        if (seen.insert(s).second) out.push_back(std::move(s));
    }
    return out;
}

std::string required_string(const ojson& j, const char* key, std::size_t line_no) {
    auto it = j.find(key);
    if (it == j.end() || !it->is_string()) malformed(line_no, std::string("missing string '") + key + "'");
    return it->get<std::string>();
}

DialogueSession session_from_json(const ojson& j, std::size_t line_no) {
    if (!j.is_object()) malformed(line_no, "record is not an object");
    DialogueSession s;
    s.session_id = required_string(j, "session_id", line_no);
    s.user_id = required_string(j, "user_id", line_no);
    if (s.session_id.empty()) malformed(line_no, "empty session_id");
    if (s.user_id.empty()) malformed(line_no, "empty user_id");
    auto time = parse_rfc3339(required_string(j, "session_time", line_no));
    if (!time) malformed(line_no, "session_time is not RFC3339");
    s.session_time = *time;
    auto turns = j.find("turns");
    if (turns == j.end() || !turns->is_array()) malformed(line_no, "missing 'turns' array");
    if (turns->empty()) malformed(line_no, "session has no turns");
    int index = 1;
    for (const auto& t : *turns) {
        if (!t.is_object()) malformed(line_no, "turn is not an object");
        Utterance u;
        u.turn_index = index++;
        auto speaker = required_string(t, "speaker", line_no);
        if (speaker == "user") {
            u.speaker = Speaker::User;
        } else if (speaker == "system") {
            u.speaker = Speaker::System;
        } else {
            malformed(line_no, "speaker must be 'user' or 'system'");
        }
        u.text = required_string(t, "text", line_no);
        u.mentioned_items = string_array(t, "items", line_no, false);
        u.ground_truth_items = string_array(t, "ground_truth", line_no, false);
        if (!u.ground_truth_items.empty() && u.speaker != Speaker::System) {
            malformed(line_no, "ground_truth on a user turn");
        }
        if (auto a = t.find("annotations"); a != t.end()) {
            if (!a->is_object()) malformed(line_no, "'annotations' must be an object");
            for (const auto& [k, v] : a->items()) {
                if (!v.is_string()) malformed(line_no, "annotation values must be strings");
                u.annotations.emplace_back(k, v.get<std::string>());
            }
        }
        u.relevant_entities = string_array(t, "relevant_entities", line_no, false);
        s.utterances.push_back(std::move(u));
    }
    return s;
}

ojson session_to_json(const DialogueSession& s) {
    ojson j;
    j["session_id"] = s.session_id;
    j["user_id"] = s.user_id;
    j["session_time"] = format_rfc3339(s.session_time);
    ojson turns = ojson::array();
    for (const auto& u : s.utterances) {
        ojson t;
        t["speaker"] = u.speaker == Speaker::User ? "user" : "system";
        t["text"] = u.text;
        t["items"] = u.mentioned_items;
        t["ground_truth"] = u.ground_truth_items;
        if (!u.annotations.empty()) {
            ojson a = ojson::object();
            for (const auto& [k, v] : u.annotations) a[k] = v;
            t["annotations"] = std::move(a);
        }
        if (!u.relevant_entities.empty()) t["relevant_entities"] = u.relevant_entities;
        turns.push_back(std::move(t));
    }
    j["turns"] = std::move(turns);
    return j;
}

CatalogItem catalog_item_from_json(const ojson& j, std::size_t line_no) {
    if (!j.is_object()) malformed(line_no, "catalog record is not an object");
    CatalogItem item;
    item.item_id = required_string(j, "item_id", line_no);
    if (item.item_id.empty()) malformed(line_no, "empty item_id");
    item.title = required_string(j, "title", line_no);
    if (auto a = j.find("attrs"); a != j.end()) {
        if (!a->is_object()) malformed(line_no, "'attrs' must be an object");
        for (const auto& [k, v] : a->items()) {
            if (!v.is_string()) malformed(line_no, "attr values must be strings");
            item.attrs[k] = v.get<std::string>();
        }
    }
    return item;
}

ojson catalog_item_to_json(const CatalogItem& item) {
    ojson j;
    j["item_id"] = item.item_id;
    j["title"] = item.title;
    ojson attrs = ojson::object();
    for (const auto& [k, v] : item.attrs) attrs[k] = v;
    j["attrs"] = std::move(attrs);
    return j;
}

void insert_session(Corpus& corpus, DialogueSession s, Split split, std::size_t line_no) {
    if (corpus.split_assignment.count(s.session_id)) {
        throw Error(ErrorKind::DuplicateSessionId, "duplicate session_id '" + s.session_id + "'", {}, line_no);
    }
    for (const auto& u : s.utterances) {
        for (const auto& id : u.mentioned_items) corpus.catalog.ensure(id);
        for (const auto& id : u.ground_truth_items) corpus.catalog.ensure(id);
    }
    corpus.split_assignment[s.session_id] = split;
    auto& user = corpus.users[s.user_id];
    user.user_id = s.user_id;
    user.sessions.push_back(std::move(s));
}

void sort_sessions(Corpus& corpus) {
    for (auto& [_, user] : corpus.users) {
        std::sort(user.sessions.begin(), user.sessions.end(), [](const auto& a, const auto& b) {
            if (a.session_time != b.session_time) return a.session_time < b.session_time;
            return a.session_id < b.session_id;
        });
    }
}

template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        ++line_no;
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        bool blank = std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
        if (!blank) fn(line, line_no);
        pos = end + 1;
    }
}

}  // namespace

std::optional<SessionTime> parse_rfc3339(std::string_view s) {
    int year, month, day, hour, minute, second;
    if (!read_digits(s, 0, 4, year) || s.size() < 19 || s[4] != '-' || !read_digits(s, 5, 2, month) || s[7] != '-' ||
        !read_digits(s, 8, 2, day)) {
        return std::nullopt;
    }
    if (s[10] != 'T' && s[10] != 't' && s[10] != ' ') return std::nullopt;
    if (!read_digits(s, 11, 2, hour) || s[13] != ':' || !read_digits(s, 14, 2, minute) || s[16] != ':' ||
        !read_digits(s, 17, 2, second)) {
        return std::nullopt;
    }
    if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) return std::nullopt;
    std::size_t pos = 19;
    std::int64_t millis = 0;
    if (pos < s.size() && s[pos] == '.') {
        ++pos;
        std::size_t digits = 0;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (digits < 3) millis = millis * 10 + (s[pos] - '0');
            ++digits;
            ++pos;
        }
        if (digits == 0) return std::nullopt;
        for (std::size_t d = digits; d < 3; ++d) millis *= 10;
    }
    std::int64_t offset_minutes = 0;
    if (pos >= s.size()) return std::nullopt;
    if (s[pos] == 'Z' || s[pos] == 'z') {
        ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
        int oh, om;
        if (!read_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !read_digits(s, pos + 4, 2, om)) {
            return std::nullopt;
        }
        offset_minutes = (oh * 60 + om) * (s[pos] == '-' ? -1 : 1);
        pos += 6;
    } else {
        return std::nullopt;
    }
    if (pos != s.size()) return std::nullopt;
    std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
    std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second - offset_minutes * 60;
    return SessionTime(std::chrono::milliseconds(secs * 1000 + millis));
}

std::string format_rfc3339(SessionTime t) {
    std::int64_t ms = t.time_since_epoch().count();
    std::int64_t secs = ms >= 0 ? ms / 1000 : (ms - 999) / 1000;
    std::int64_t frac = ms - secs * 1000;
    std::int64_t days = secs >= 0 ? secs / 86400 : (secs - 86399) / 86400;
    std::int64_t rem = secs - days * 86400;
    // civil_from_days
    std::int64_t z = days + 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned d = doy - (153 * mp + 2) / 5 + 1;
    const unsigned m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
    char buf[128];
    if (frac != 0) {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld.%03lldZ", static_cast<long long>(y), m, d,
                      static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                      static_cast<long long>(rem % 60), static_cast<long long>(frac));
    } else {
        std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<long long>(y), m, d,
                      static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                      static_cast<long long>(rem % 60));
    }
    return buf;
}

// --- Catalog -------------------------------------------------------------

bool Catalog::add(CatalogItem item) {
    bool fresh = items_.count(item.item_id) == 0;
    items_[item.item_id] = std::move(item);
    rebuild_index();
    return fresh;
}

void Catalog::ensure(const std::string& item_id) {
    if (items_.count(item_id)) return;
    items_[item_id] = CatalogItem{item_id, item_id, {}};
    rebuild_index();
}

void Catalog::rebuild_index() {
    by_title_.clear();
    // First item (by id) wins on canonical-title collisions.
    for (const auto& [id, item] : items_) {
        by_title_.emplace(canonical_title(item.title), id);
    }
}

const CatalogItem* Catalog::find(const std::string& item_id) const {
    auto it = items_.find(item_id);
    return it == items_.end() ? nullptr : &it->second;
}

std::optional<std::string> Catalog::resolve(std::string_view title_or_id) const {
    auto key = canonical_title(title_or_id);
    if (key.empty()) return std::nullopt;
    if (auto it = by_title_.find(key); it != by_title_.end()) return it->second;
    if (auto it = items_.find(std::string(title_or_id)); it != items_.end()) return it->first;
    return std::nullopt;
}

std::string Catalog::title_of(const std::string& item_id) const {
    auto it = items_.find(item_id);
    return it == items_.end() ? item_id : it->second.title;
}

std::vector<std::string> Catalog::find_mentions(std::string_view text) const {
    std::string haystack = " " + canonical_title(text) + " ";
    std::vector<std::pair<std::size_t, std::string>> hits;
    for (const auto& [title, id] : by_title_) {
        if (title.empty()) continue;
        auto pos = haystack.find(" " + title + " ");
        if (pos != std::string::npos) hits.emplace_back(pos, id);
    }
    std::sort(hits.begin(), hits.end());
    std::vector<std::string> out;
    for (auto& [_, id] : hits) out.push_back(std::move(id));
    return out;
}

// --- Corpus --------------------------------------------------------------

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Valid: return "valid";
        case Split::Test: return "test";
    }
    return "train";
}

std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "valid") return Split::Valid;
    if (s == "test") return Split::Test;
    return std::nullopt;
}

std::size_t Corpus::session_count() const {
    std::size_t n = 0;
    for (const auto& [_, u] : users) n += u.sessions.size();
    return n;
}

const DialogueSession* Corpus::find_session(const std::string& session_id) const {
    for (const auto& [_, u] : users) {
        for (const auto& s : u.sessions) {
            if (s.session_id == session_id) return &s;
        }
    }
    return nullptr;
}

Split Corpus::split_of(const std::string& session_id) const {
    auto it = split_assignment.find(session_id);
    return it == split_assignment.end() ? Split::Train : it->second;
}

Corpus parse_sessions_jsonl(std::string_view sessions_text, std::string_view catalog_text) {
    Corpus corpus;
    for_each_line(catalog_text, [&](std::string_view line, std::size_t line_no) {
        auto j = ojson::parse(line, nullptr, false);
        if (j.is_discarded()) malformed(line_no, "catalog line is not valid JSON");
        corpus.catalog.add(catalog_item_from_json(j, line_no));
    });
    for_each_line(sessions_text, [&](std::string_view line, std::size_t line_no) {
        auto j = ojson::parse(line, nullptr, false);
        if (j.is_discarded()) malformed(line_no, "line is not valid JSON");
        insert_session(corpus, session_from_json(j, line_no), Split::Train, line_no);
    });
    sort_sessions(corpus);
    return corpus;
}

Corpus load_corpus(const std::filesystem::path& sessions, const std::optional<std::filesystem::path>& catalog) {
    std::string catalog_text = catalog ? read_text_file(*catalog) : std::string{};
    return parse_sessions_jsonl(read_text_file(sessions), catalog_text);
}

std::string sessions_to_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& [_, user] : corpus.users) {
        for (const auto& s : user.sessions) {
            out += session_to_json(s).dump();
            out += '\n';
        }
    }
    return out;
}

std::string catalog_to_jsonl(const Catalog& catalog) {
    std::string out;
    for (const auto& [_, item] : catalog.items()) {
        out += catalog_item_to_json(item).dump();
        out += '\n';
    }
    return out;
}

std::string corpus_to_json(const Corpus& corpus) {
    ojson j;
    j["format"] = "memrec-corpus";
    j["version"] = 1;
    ojson catalog = ojson::array();
    for (const auto& [_, item] : corpus.catalog.items()) catalog.push_back(catalog_item_to_json(item));
    j["catalog"] = std::move(catalog);
    ojson sessions = ojson::array();
    for (const auto& [_, user] : corpus.users) {
        for (const auto& s : user.sessions) {
            auto sj = session_to_json(s);
            sj["split"] = std::string(to_string(corpus.split_of(s.session_id)));
            sessions.push_back(std::move(sj));
        }
    }
    j["sessions"] = std::move(sessions);
    return j.dump(1) + "\n";
}

Corpus corpus_from_json(std::string_view text) {
    auto j = ojson::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object() || j.value("format", "") != "memrec-corpus") {
        throw Error(ErrorKind::MalformedRecord, "not a memrec corpus file");
    }
    Corpus corpus;
    std::size_t index = 0;
    for (const auto& item : j.at("catalog")) corpus.catalog.add(catalog_item_from_json(item, ++index));
    index = 0;
    for (const auto& sj : j.at("sessions")) {
        ++index;
        auto split = parse_split(sj.value("split", "train"));
        if (!split) malformed(index, "unknown split");
        insert_session(corpus, session_from_json(sj, index), *split, index);
    }
    sort_sessions(corpus);
    return corpus;
}

void save_corpus_file(const Corpus& corpus, const std::filesystem::path& path) {
    write_text_file_atomic(path, corpus_to_json(corpus));
}

Corpus load_corpus_file(const std::filesystem::path& path) {
    return corpus_from_json(read_text_file(path));
}

Corpus chronological_split(Corpus corpus, std::size_t n_valid, std::size_t n_test) {
    if (n_test < 1) throw Error(ErrorKind::InvalidArgument, "n_test must be at least 1");
    for (const auto& [_, user] : corpus.users) {
        const std::size_t n = user.sessions.size();
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t from_end = n - i;  // 1 for the last session
            Split s = Split::Train;
            if (from_end <= n_test) {
                s = Split::Test;
            } else if (from_end <= n_test + n_valid) {
                s = Split::Valid;
            }
            corpus.split_assignment[user.sessions[i].session_id] = s;
        }
    }
    return corpus;
}

std::size_t filter_duplicate_targets(Corpus& corpus) {
    std::size_t cleared = 0;
    for (auto& [_, user] : corpus.users) {
        for (auto& session : user.sessions) {
            std::set<std::string> seen;
            for (auto& u : session.utterances) {
                bool overlap = std::any_of(u.ground_truth_items.begin(), u.ground_truth_items.end(),
                                           [&](const std::string& id) { return seen.count(id) != 0; });
                if (overlap) {
                    u.ground_truth_items.clear();
                    ++cleared;
                }
                seen.insert(u.mentioned_items.begin(), u.mentioned_items.end());
            }
        }
    }
    return cleared;
}

std::vector<EvaluationPoint> evaluation_points(const Corpus& corpus, Split split) {
    std::vector<EvaluationPoint> points;
    for (const auto& [user_id, user] : corpus.users) {
        for (const auto& session : user.sessions) {
            if (corpus.split_of(session.session_id) != split) continue;
            for (std::size_t k = 0; k < session.utterances.size(); ++k) {
                const auto& u = session.utterances[k];
                if (u.speaker != Speaker::System || u.ground_truth_items.empty()) continue;
                EvaluationPoint p;
                p.user_id = user_id;
                p.session_id = session.session_id;
                p.turn_index = u.turn_index;
                p.session_time = session.session_time;
                p.context.assign(session.utterances.begin(), session.utterances.begin() + static_cast<std::ptrdiff_t>(k));
                p.ground_truth = u.ground_truth_items;
                p.relevant_entities = u.relevant_entities;
                points.push_back(std::move(p));
            }
        }
    }
    return points;
}

std::vector<std::string> mentioned_items(std::span<const Utterance> context) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& u : context) {
        for (const auto& id : u.mentioned_items) {
            if (seen.insert(id).second) out.push_back(id);
        }
    }
    return out;
}

std::string render_conversation(std::span<const Utterance> context) {
    std::string out;
    for (const auto& u : context) {
        if (!out.empty()) out += '\n';
        out += u.speaker == Speaker::User ? "User: " : "System: ";
        for (char c : u.text) out.push_back(c == '\n' || c == '\r' ? ' ' : c);
    }
    return out;
}

std::string conversation_text(std::span<const Utterance> context) {
    std::string out;
    for (const auto& u : context) {
        if (!out.empty()) out += '\n';
        out += u.text;
    }
    return out;
}

}  // namespace memrec
