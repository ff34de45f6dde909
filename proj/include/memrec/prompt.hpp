#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memrec {

enum class TemplateKind { Add, Merge, Retrieve, Reflect, Recommend };

inline constexpr std::array<TemplateKind, 5> kAllTemplateKinds{
    TemplateKind::Add, TemplateKind::Merge, TemplateKind::Retrieve, TemplateKind::Reflect, TemplateKind::Recommend};

std::string_view to_string(TemplateKind kind);
std::optional<TemplateKind> parse_template_kind(std::string_view name);

using SlotBindings = std::map<std::string, std::string>;

// Task description, context and format requirements. Placeholders are
// written {{slot}} and may appear in any of the three parts.
struct PromptTemplate {
    TemplateKind kind = TemplateKind::Add;
    std::string task_description;
    std::string context;
    std::string format_requirements;
    std::vector<std::string> slots;
};

// A rendered prompt. `slots` keeps the bindings so offline ports can act on
// structured input; HTTP ports only ever see `text`.
struct Prompt {
    std::optional<TemplateKind> kind;
    std::string text;
    std::string repair_text;  // text with the repair instruction appended to the format block
    SlotBindings slots;
};

// Throws MissingSlot when a declared slot is unbound.
std::string render(const PromptTemplate& tmpl, const SlotBindings& bindings, std::string_view format_suffix = {});

// Placeholders referenced anywhere in the template, in first-use order.
std::vector<std::string> referenced_slots(const PromptTemplate& tmpl);

class TemplateSet {
public:
    // Parses the sectioned key-value template format; validates every
    // template (all three parts non-empty, placeholders declared).
    static TemplateSet parse(std::string_view text);
    static TemplateSet load(const std::filesystem::path& path);
    // The template file shipped with the project, compiled in.
    static const TemplateSet& builtin();

    const PromptTemplate& get(TemplateKind kind) const;
    const std::string& repair_instruction() const { return repair_; }
    int version() const { return version_; }

    Prompt make(TemplateKind kind, const SlotBindings& bindings) const;

private:
    std::map<TemplateKind, PromptTemplate> templates_;
    std::string repair_;
    int version_ = 0;
};

std::string_view builtin_template_text();

}  // namespace memrec
