#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/llm.hpp"

#include <algorithm>
#include <atomic>
#include <deque>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <tuple>
#include <vector>

namespace memrec::testing {

inline std::filesystem::path data_dir() { return MEMREC_TEST_DATA; }

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("memrec-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Port that answers from a callback and remembers every prompt it saw.
class ScriptedLlm final : public LanguageModelPort {
public:
    using Fn = std::function<std::string(const Prompt&, std::string_view)>;
    explicit ScriptedLlm(Fn fn) : fn_(std::move(fn)) {}

    std::vector<std::string> seen;
    std::vector<std::optional<TemplateKind>> kinds;

private:
    std::string generate(const Prompt& prompt, std::string_view text) override {
        seen.emplace_back(text);
        kinds.push_back(prompt.kind);
        return fn_(prompt, text);
    }
    Fn fn_;
};

// Replies with the queued strings in order, then with the last one.
inline ScriptedLlm queued(std::vector<std::string> replies) {
    auto q = std::make_shared<std::deque<std::string>>(replies.begin(), replies.end());
    return ScriptedLlm([q](const Prompt&, std::string_view) {
        std::string r = q->front();
        if (q->size() > 1) q->pop_front();
        return r;
    });
}

inline Utterance user(std::string text, std::vector<std::string> items = {}) {
    Utterance u;
    u.speaker = Speaker::User;
    u.text = std::move(text);
    u.mentioned_items = std::move(items);
    return u;
}

inline Utterance sys(std::string text, std::vector<std::string> items = {}, std::vector<std::string> truth = {}) {
    Utterance u;
    u.speaker = Speaker::System;
    u.text = std::move(text);
    u.mentioned_items = std::move(items);
    u.ground_truth_items = std::move(truth);
    return u;
}

inline DialogueSession make_session(std::string id, std::string uid, int day, std::vector<Utterance> turns) {
    DialogueSession s;
    s.session_id = std::move(id);
    s.user_id = std::move(uid);
    s.session_time = *parse_rfc3339("2024-03-" + std::string(day < 10 ? "0" : "") + std::to_string(day) + "T12:00:00Z");
    int k = 1;
    for (auto& t : turns) t.turn_index = k++;
    s.utterances = std::move(turns);
    return s;
}

// Corpus from sessions, every session Train, catalog from mentions,
// sessions in chronological order.
inline Corpus corpus_of(std::vector<DialogueSession> sessions, std::vector<CatalogItem> items = {}) {
    Corpus c;
    for (auto& item : items) c.catalog.add(item);
    for (auto& s : sessions) {
        for (const auto& u : s.utterances) {
            for (const auto& id : u.mentioned_items) c.catalog.ensure(id);
            for (const auto& id : u.ground_truth_items) c.catalog.ensure(id);
        }
        c.split_assignment[s.session_id] = Split::Train;
        auto& user = c.users[s.user_id];
        user.user_id = s.user_id;
        user.sessions.push_back(std::move(s));
    }
    for (auto& [_, user] : c.users) {
        std::sort(user.sessions.begin(), user.sessions.end(), [](const DialogueSession& a, const DialogueSession& b) {
            return std::tie(a.session_time, a.session_id) < std::tie(b.session_time, b.session_id);
        });
    }
    return c;
}

}  // namespace memrec::testing
