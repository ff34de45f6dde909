#include "memrec/error.hpp"
#include "memrec/io.hpp"
#include "memrec/prompt.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace memrec;
using namespace memrec::testing;

namespace {

const char* kMinimal = R"(version = 3
[repair]
text = "fix it"
[add]
slots = "conversation"
task = "T add"
context = "C {{conversation}}"
format = "F add"
[merge]
slots = "entity"
task = "T merge {{entity}}"
context = "C merge"
format = "F merge"
[retrieve]
slots = "q"
task = "T retrieve"
context = "C retrieve"
format = "at most {{q}}"
[reflect]
slots = "cap"
task = "T reflect"
context = "C reflect"
format = "F {{cap}}"
[recommend]
slots = "conversation"
task = "T recommend"
context = "C {{conversation}}"
format = "F recommend"
)";

ErrorKind parse_error(const std::string& text) {
    try {
        TemplateSet::parse(text);
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "parsed";
    return ErrorKind::InvalidArgument;
}

}  // namespace

TEST(Builtin, HasAllFiveTemplatesWithThreeParts) {
    const auto& set = TemplateSet::builtin();
    for (auto kind : kAllTemplateKinds) {
        const auto& t = set.get(kind);
        EXPECT_FALSE(t.task_description.empty());
        EXPECT_FALSE(t.context.empty());
        EXPECT_FALSE(t.format_requirements.empty());
        auto used = referenced_slots(t);
        for (const auto& s : used) EXPECT_NE(std::find(t.slots.begin(), t.slots.end(), s), t.slots.end()) << s;
    }
    EXPECT_FALSE(set.repair_instruction().empty());
    EXPECT_GE(set.version(), 1);
}

TEST(Builtin, MatchesShippedTemplateFile) {
    auto shipped = read_text_file(data_dir().parent_path().parent_path() / "config" / "prompts.toml");
    EXPECT_EQ(shipped, builtin_template_text());
}

TEST(Render, SubstitutesInEveryPart) {
    auto set = TemplateSet::parse(kMinimal);
    EXPECT_EQ(set.version(), 3);
    auto p = set.make(TemplateKind::Merge, {{"entity", "Her"}});
    EXPECT_EQ(p.text, "T merge Her\n\n### Context\nC merge\n\n### Output format\nF merge");
    EXPECT_EQ(p.repair_text, p.text + "\nfix it");
    EXPECT_EQ(p.kind, TemplateKind::Merge);
    EXPECT_EQ(p.slots.at("entity"), "Her");
}

TEST(Render, MissingSlotThrows) {
    auto set = TemplateSet::parse(kMinimal);
    try {
        set.make(TemplateKind::Retrieve, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingSlot);
    }
    EXPECT_THROW(TemplateSet::builtin().make(TemplateKind::Recommend, {{"conversation", "x"}}), Error);
}

TEST(Render, BoundValuesAreNotReexpanded) {
    auto set = TemplateSet::parse(kMinimal);
    auto p = set.make(TemplateKind::Add, {{"conversation", "{{conversation}}"}});
    EXPECT_NE(p.text.find("C {{conversation}}"), std::string::npos);
}

TEST(Parse, RejectsBrokenTemplateFiles) {
    std::string text = kMinimal;
    auto without = [&](const std::string& line) {
        std::string t = text;
        auto pos = t.find(line);
        t.erase(pos, line.size() + 1);
        return t;
    };
    EXPECT_EQ(parse_error(without("format = \"F add\"")), ErrorKind::TemplateError);
    EXPECT_EQ(parse_error(without("slots = \"q\"")), ErrorKind::TemplateError);
    EXPECT_EQ(parse_error(without("text = \"fix it\"")), ErrorKind::TemplateError);
    EXPECT_EQ(parse_error(text + "[surprise]\ntask = \"x\"\n"), ErrorKind::TemplateError);
    EXPECT_EQ(parse_error(text + "[add]\ncolour = \"x\"\n"), ErrorKind::TemplateError);
    std::string no_recommend = text.substr(0, text.find("[recommend]"));
    EXPECT_EQ(parse_error(no_recommend), ErrorKind::TemplateError);
}

TEST(Load, EditedFileChangesPromptWithoutRebuild) {
    TempDir dir;
    std::string text = kMinimal;
    text.replace(text.find("T add"), 5, "Summarize entities please");
    write_text_file_atomic(dir.path() / "prompts.toml", text);
    auto set = TemplateSet::load(dir.path() / "prompts.toml");
    auto p = set.make(TemplateKind::Add, {{"conversation", "User: hi"}});
    EXPECT_TRUE(p.text.starts_with("Summarize entities please"));
}

TEST(Kinds, RoundTripNames) {
    for (auto kind : kAllTemplateKinds) EXPECT_EQ(parse_template_kind(to_string(kind)), kind);
    EXPECT_FALSE(parse_template_kind("summarize"));
}
