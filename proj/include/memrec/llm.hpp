#pragma once

#include "memrec/dialogue.hpp"
#include "memrec/prompt.hpp"

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

enum class OutputKind { EntityAttitudeMap, EntityList, ItemList, MergedAttitude, GuidelineSet };

struct StructuredOutput {
    OutputKind kind = OutputKind::EntityList;
    EntityAttitudes pairs;          // EntityAttitudeMap, in emitted order
    std::vector<std::string> list;  // EntityList / ItemList / GuidelineSet, duplicate-free
    std::string text;               // MergedAttitude; the optional reply for ItemList
    std::string raw;
};

// Slice of the first balanced JSON object or array (starting at the first
// '{' or '['), or nullopt when the brackets never balance. Strings and
// escapes are honoured; a closing bracket of the wrong type ends the scan.
std::optional<std::string_view> first_balanced_json(std::string_view raw);

// Never throws. nullopt means the text does not satisfy `kind`.
std::optional<StructuredOutput> parse_structured(std::string_view raw, OutputKind kind);

// Counts every model call made through complete(), per template kind.
struct CallAudit {
    static void record(std::optional<TemplateKind> kind);
    static std::size_t count(TemplateKind kind);
    static std::size_t total();
    static void reset();
};

class LanguageModelPort;

// The only way to call a model: renders go in, typed output comes out.
// Retries up to port.retry_budget() times with the repair prompt; throws
// Error(ParseFailure) carrying the last raw text, or Error(LlmUnavailable).
StructuredOutput complete(LanguageModelPort& port, const Prompt& prompt, OutputKind expected);

class LanguageModelPort {
public:
    virtual ~LanguageModelPort() = default;

    std::size_t retry_budget() const { return retry_budget_; }
    void set_retry_budget(std::size_t n) { retry_budget_ = n; }

private:
    friend StructuredOutput complete(LanguageModelPort&, const Prompt&, OutputKind);

    // `text` is prompt.text on the first attempt and prompt.repair_text on
    // retries. Decoding is always greedy (temperature 0).
    virtual std::string generate(const Prompt& prompt, std::string_view text) = 0;

    std::size_t retry_budget_ = 1;
};

// Offline world knowledge for MockLlm: the entity annotations of known
// utterances and the catalog with item attributes.
struct MockKnowledge {
    std::map<std::string, EntityAttitudes> annotations;  // canonicalize(utterance) -> pairs
    Catalog catalog;

    static MockKnowledge from_corpus(const Corpus& corpus);
    void annotate(std::string_view utterance, EntityAttitudes pairs);
};

struct MockStub {
    std::string pattern;  // substring of the prompt text
    std::string response;
    std::optional<TemplateKind> kind;  // restricts the stub to one template
};

// Deterministic, rule-driven model. The first matching stub wins; otherwise
// each template kind has a default behaviour:
//   add       - annotations of every conversation line found in the knowledge
//   merge     - mock_merge_rule(existing, new)
//   retrieve  - candidates ranked by token overlap with the conversation,
//               zero-overlap entities dropped, first q kept
//   recommend - expert titles ordered by the net polarity of associated
//               memory entities (stable), or associated catalog items when
//               the expert block is empty
//   reflect   - the current guideline list plus fixed_guideline() if absent
// Prompts without a template kind are echoed back.
class MockLlm final : public LanguageModelPort {
public:
    explicit MockLlm(MockKnowledge knowledge = {}, std::vector<MockStub> stubs = {}, std::uint64_t seed = 0);

    void set_unavailable(bool down) { unavailable_ = down; }
    std::size_t raw_calls() const { return raw_calls_.load(); }

    static std::string fixed_guideline();

private:
    std::string generate(const Prompt& prompt, std::string_view text) override;

    std::string default_add(const Prompt& prompt) const;
    std::string default_retrieve(const Prompt& prompt) const;
    std::string default_recommend(const Prompt& prompt) const;
    std::string default_reflect(const Prompt& prompt) const;

    MockKnowledge knowledge_;
    std::vector<MockStub> stubs_;
    std::uint64_t seed_;
    bool unavailable_ = false;
    std::atomic<std::size_t> raw_calls_{0};
};

std::unique_ptr<MockLlm> mock_program(std::vector<MockStub> stubs, MockKnowledge knowledge = {}, std::uint64_t seed = 0);

// New attitude wins when the two disagree in polarity; identical or
// contained attitudes keep the existing text; otherwise "existing; new".
std::string mock_merge_rule(std::string_view existing, std::string_view incoming);
bool is_negative_attitude(std::string_view attitude);

struct HttpLlmOptions {
    std::string endpoint;  // e.g. http://localhost:8000 ; /v1/chat/completions is appended
    std::string model;
    std::string api_key;
    std::size_t max_in_flight = 4;
    int timeout_seconds = 120;
};

// OpenAI-compatible chat completion client.
class HttpLlm final : public LanguageModelPort {
public:
    explicit HttpLlm(HttpLlmOptions options);

    // Request body sent for `text`; exposed for tests.
    std::string request_body(std::string_view text) const;

private:
    std::string generate(const Prompt& prompt, std::string_view text) override;

    HttpLlmOptions options_;
    std::counting_semaphore<1024> in_flight_;
};

}  // namespace memrec
