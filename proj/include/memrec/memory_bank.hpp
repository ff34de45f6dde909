#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/llm.hpp"
#include "memrec/prompt.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

using Tick = std::uint64_t;

struct MemoryEntry {
    std::string entity;  // canonical key
    std::string attitude;
    Tick last_touched = 0;

    bool operator==(const MemoryEntry&) const = default;
};

// Per-user entity -> (attitude, timestamp) mapping. Timestamps come from the
// bank's own logical clock, which advances once per add, merge or read.
class MemoryBank {
public:
    // Maps a canonical entity to the key it should be stored under, e.g. to
    // fold "mobile phone" into an existing "phone". Returning the input keeps
    // entities distinct.
    using EntityResolver = std::function<std::string(const std::string& canonical, const MemoryBank& bank)>;

    MemoryBank() = default;
    explicit MemoryBank(std::string user_id) : user_id_(std::move(user_id)) {}

    const std::string& user_id() const { return user_id_; }
    Tick clock() const { return clock_; }
    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::map<std::string, MemoryEntry>& entries() const { return entries_; }

    // Canonical key for `entity` (including the resolver); empty if the
    // entity canonicalizes to nothing.
    std::string key_for(std::string_view entity) const;
    bool contains(std::string_view entity) const;
    const MemoryEntry* find(std::string_view entity) const;

    void set_entity_resolver(EntityResolver resolver) { resolver_ = std::move(resolver); }

    // Low-level mutation used by the operations below and by restore.
    Tick advance_clock() { return ++clock_; }
    void write(const std::string& key, std::string attitude, Tick at);
    bool erase(const std::string& key) { return entries_.erase(key) != 0; }
    void restore_state(std::map<std::string, MemoryEntry> entries, Tick clock);

    bool operator==(const MemoryBank& other) const {
        return user_id_ == other.user_id_ && clock_ == other.clock_ && entries_ == other.entries_;
    }

private:
    std::string user_id_;
    std::map<std::string, MemoryEntry> entries_;
    Tick clock_ = 0;
    EntityResolver resolver_;
};

struct MergeOutcome {
    std::string attitude;
    bool degraded = false;  // model output unusable; new attitude appended verbatim
};

struct AddReport {
    std::size_t extracted = 0;  // pairs the model returned
    std::size_t added = 0;      // new keys
    std::size_t merged = 0;
    std::size_t degraded_merges = 0;
    std::vector<std::string> touched;  // keys, in processing order
    bool skipped = false;  // output never parsed; bank untouched
    std::string error;
};

// Runs the add template once over the whole session and writes each
// entity/attitude pair; existing keys are merged instead of overwritten.
// Throws Error(LlmUnavailable); a parse failure skips the session.
AddReport extract_and_add(MemoryBank& bank, const DialogueSession& session, LanguageModelPort& llm,
                          const TemplateSet& templates = TemplateSet::builtin());

// Throws Error(EntityNotFound) when the entity is not in the bank.
MergeOutcome merge_attitude(MemoryBank& bank, std::string_view entity, std::string_view new_attitude, LanguageModelPort& llm,
                            const TemplateSet& templates = TemplateSet::builtin());

// Removes entries whose age (clock - last_touched) exceeds `threshold`.
// Returns the removed keys. Does not advance the clock.
std::vector<std::string> delete_stale(MemoryBank& bank, Tick threshold);

// Attitudes of the present entities, in request order; refreshes their
// timestamps (one clock tick when anything was found).
std::vector<std::pair<std::string, std::string>> read_attitudes(MemoryBank& bank, const std::vector<std::string>& entities);

// One JSONL file per user plus a clock sidecar under `root`.
class MemoryStore {
public:
    explicit MemoryStore(std::filesystem::path root) : root_(std::move(root)) {}

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path entries_path(const std::string& user_id) const;
    std::filesystem::path clock_path(const std::string& user_id) const;

    // Throws Error(StoreIo).
    void persist(const MemoryBank& bank) const;
    // Unknown users restore to an empty bank. Throws Error(CorruptRecord).
    MemoryBank restore(const std::string& user_id) const;
    std::vector<std::string> users() const;

private:
    std::filesystem::path root_;
};

// Filename-safe form of a user id (percent-encodes anything outside
// [A-Za-z0-9._-]).
std::string encode_user_id(std::string_view user_id);
std::string decode_user_id(std::string_view encoded);

}  // namespace memrec
