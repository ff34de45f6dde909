#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/llm.hpp"
#include "memrec/prompt.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

namespace memrec {

struct ExpertQuery {
    std::string user_id;
    std::string session_id;
    int turn_index = 0;
    std::span<const Utterance> context;
};

// Source of collaborative candidates. Implementations must be immutable
// after construction so queries can run concurrently.
class ExpertModel {
public:
    explicit ExpertModel(std::size_t candidate_count) : candidate_count_(candidate_count) {}
    virtual ~ExpertModel() = default;

    std::size_t candidate_count() const { return candidate_count_; }

    // Raw ranked list; expert_candidates() applies the output contract.
    virtual std::vector<std::string> rank(const ExpertQuery& query) const = 0;

private:
    std::size_t candidate_count_;
};

// Item co-occurrence within Train sessions plus session popularity.
// Candidates are scored by summed co-occurrence with the items mentioned so
// far; ties fall back to popularity, then item id.
class CoVisitExpert final : public ExpertModel {
public:
    static CoVisitExpert train(const Corpus& corpus, std::size_t candidate_count = 40);

    std::vector<std::string> rank(const ExpertQuery& query) const override;

    std::size_t pair_count(const std::string& a, const std::string& b) const;
    std::size_t popularity(const std::string& item) const;
    // True when there were no Train sessions (popularity-only over catalog).
    bool popularity_only() const { return popularity_only_; }
    const std::vector<std::string>& popularity_order() const { return by_popularity_; }

private:
    explicit CoVisitExpert(std::size_t candidate_count) : ExpertModel(candidate_count) {}

    std::map<std::string, std::map<std::string, std::size_t>> pairs_;
    std::map<std::string, std::size_t> popularity_;
    std::vector<std::string> by_popularity_;
    bool popularity_only_ = false;
};

// Precomputed candidates, JSONL {"user_id","session_id","turn_index","candidates":[...]}.
class ExternalExpert final : public ExpertModel {
public:
    static ExternalExpert load(const std::filesystem::path& path, std::size_t candidate_count = 40);
    static ExternalExpert parse(std::string_view jsonl, std::size_t candidate_count = 40);

    std::vector<std::string> rank(const ExpertQuery& query) const override;

private:
    explicit ExternalExpert(std::size_t candidate_count) : ExpertModel(candidate_count) {}

    std::map<std::tuple<std::string, std::string, int>, std::vector<std::string>> table_;
};

// At most candidate_count catalog items, duplicate-free, none of them already
// mentioned in the context.
std::vector<std::string> expert_candidates(const ExpertModel& expert, const ExpertQuery& query, const Catalog& catalog);

struct GuidelineSet {
    std::vector<std::string> guidelines;
    std::size_t cap = 10;
    std::uint64_t version = 0;

    bool operator==(const GuidelineSet&) const = default;
};

GuidelineSet seed_manual_guidelines();

enum class Outcome { Hit, Miss };

struct ReflectionRecord {
    std::string trajectory;  // rendered recommendation prompt + model output
    Outcome outcome = Outcome::Miss;
    std::string response;  // what the user said about the recommendation, if anything
};

struct ReflectResult {
    GuidelineSet guidelines;
    bool updated = false;
    std::string error;
};

// Replaces the set with the model's revision, keeping the newest `cap`
// entries and bumping the version. A parse failure leaves the set as is.
ReflectResult reflect(const GuidelineSet& current, const ReflectionRecord& record, LanguageModelPort& llm,
                      const TemplateSet& templates = TemplateSet::builtin());

// Shared guideline set: readers get an immutable snapshot, writers replace
// the whole set under a lock.
class GuidelineStore {
public:
    explicit GuidelineStore(GuidelineSet initial = seed_manual_guidelines())
        : current_(std::make_shared<const GuidelineSet>(std::move(initial))) {}

    std::shared_ptr<const GuidelineSet> snapshot() const;
    // Runs reflect() against the current set and publishes the result.
    ReflectResult reflect_and_publish(const ReflectionRecord& record, LanguageModelPort& llm,
                                      const TemplateSet& templates = TemplateSet::builtin());
    void publish(GuidelineSet next);

private:
    mutable std::mutex read_mutex_;
    std::mutex write_mutex_;
    std::shared_ptr<const GuidelineSet> current_;
};

// {"version": n, "cap": c, "guidelines": [...]}
std::string guidelines_to_json(const GuidelineSet& set);
GuidelineSet guidelines_from_json(std::string_view text);
void save_guidelines(const GuidelineSet& set, const std::filesystem::path& path);
GuidelineSet load_guidelines(const std::filesystem::path& path);

}  // namespace memrec
