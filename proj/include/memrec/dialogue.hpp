#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace memrec {

enum class Speaker { User, System };

using SessionTime = std::chrono::sys_time<std::chrono::milliseconds>;

// RFC3339 with optional fractional seconds and Z / +hh:mm offsets.
std::optional<SessionTime> parse_rfc3339(std::string_view text);
// Always UTC, "Z" suffix, milliseconds only when non-zero.
std::string format_rfc3339(SessionTime t);

using EntityAttitudes = std::vector<std::pair<std::string, std::string>>;

struct Utterance {
    int turn_index = 1;
    Speaker speaker = Speaker::User;
    std::string text;
    std::vector<std::string> mentioned_items;
    std::vector<std::string> ground_truth_items;
    // Optional fixture metadata: the entity/attitude pairs a perfect extractor
    // would pull from this turn, and the memory entities this turn's
    // recommendation should draw on. Never shown to a real model.
    EntityAttitudes annotations;
    std::vector<std::string> relevant_entities;

    bool operator==(const Utterance&) const = default;
};

struct DialogueSession {
    std::string session_id;
    std::string user_id;
    SessionTime session_time{};
    std::vector<Utterance> utterances;

    bool operator==(const DialogueSession&) const = default;
};

struct UserRecord {
    std::string user_id;
    std::vector<DialogueSession> sessions;  // chronological

    bool operator==(const UserRecord&) const = default;
};

struct CatalogItem {
    std::string item_id;
    std::string title;
    std::map<std::string, std::string> attrs;

    bool operator==(const CatalogItem&) const = default;
};

// Item set with canonical-title lookup. Iteration order is item_id order.
class Catalog {
public:
    // Adds or replaces an item. Returns false when the id already existed.
    bool add(CatalogItem item);
    // Adds a bare id (title = id) unless already present.
    void ensure(const std::string& item_id);

    bool contains(const std::string& item_id) const { return items_.count(item_id) != 0; }
    const CatalogItem* find(const std::string& item_id) const;
    const std::map<std::string, CatalogItem>& items() const { return items_; }
    std::size_t size() const { return items_.size(); }

    // Exact match after canonical_title() against titles, then item ids.
    std::optional<std::string> resolve(std::string_view title_or_id) const;
    std::string title_of(const std::string& item_id) const;

    // Items whose canonical title occurs in the text at word boundaries,
    // ordered by first occurrence.
    std::vector<std::string> find_mentions(std::string_view text) const;

    bool operator==(const Catalog& other) const { return items_ == other.items_; }

private:
    void rebuild_index();

    std::map<std::string, CatalogItem> items_;
    std::map<std::string, std::string> by_title_;
};

enum class Split { Train, Valid, Test };

std::string_view to_string(Split s);
std::optional<Split> parse_split(std::string_view s);

struct Corpus {
    std::map<std::string, UserRecord> users;
    Catalog catalog;
    std::map<std::string, Split> split_assignment;

    std::size_t session_count() const;
    const DialogueSession* find_session(const std::string& session_id) const;
    Split split_of(const std::string& session_id) const;

    bool operator==(const Corpus&) const = default;
};

// Sessions JSONL (+ optional catalog JSONL). All sessions start as Train.
Corpus load_corpus(const std::filesystem::path& sessions, const std::optional<std::filesystem::path>& catalog = std::nullopt);
Corpus parse_sessions_jsonl(std::string_view sessions_text, std::string_view catalog_text = {});
std::string sessions_to_jsonl(const Corpus& corpus);
std::string catalog_to_jsonl(const Catalog& catalog);

// Single-file corpus (sessions, catalog and split assignment).
void save_corpus_file(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus_file(const std::filesystem::path& path);
std::string corpus_to_json(const Corpus& corpus);
Corpus corpus_from_json(std::string_view text);

Corpus chronological_split(Corpus corpus, std::size_t n_valid = 1, std::size_t n_test = 1);

// Clears ground truth that overlaps any item mentioned in an earlier turn of
// the same session. Returns the number of evaluation points cleared.
std::size_t filter_duplicate_targets(Corpus& corpus);

struct EvaluationPoint {
    std::string user_id;
    std::string session_id;
    int turn_index = 0;
    SessionTime session_time{};
    std::vector<Utterance> context;  // turns 1..k-1
    std::vector<std::string> ground_truth;
    std::vector<std::string> relevant_entities;
};

// Ordered by user_id, then session chronology, then turn.
std::vector<EvaluationPoint> evaluation_points(const Corpus& corpus, Split split);

std::vector<std::string> mentioned_items(std::span<const Utterance> context);
// "User: ...\nSystem: ..." with one line per turn.
std::string render_conversation(std::span<const Utterance> context);
std::string conversation_text(std::span<const Utterance> context);

}  // namespace memrec
