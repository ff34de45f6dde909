#include "memrec/prompt.hpp"

#include "memrec/config.hpp"
#include "memrec/error.hpp"
#include "memrec/io.hpp"

#include <algorithm>
#include <charconv>
#include <set>

namespace memrec {

namespace {

constexpr std::string_view kOpen = "{{";
constexpr std::string_view kClose = "}}";

std::vector<std::string> placeholders(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while ((pos = text.find(kOpen, pos)) != std::string_view::npos) {
        auto end = text.find(kClose, pos + kOpen.size());
        if (end == std::string_view::npos) break;
        out.emplace_back(text.substr(pos + kOpen.size(), end - pos - kOpen.size()));
        pos = end + kClose.size();
    }
    return out;
}

std::string substitute(std::string_view text, const SlotBindings& bindings) {
    std::string out;
    std::size_t pos = 0;
    while (true) {
        auto open = text.find(kOpen, pos);
        if (open == std::string_view::npos) break;
        auto close = text.find(kClose, open + kOpen.size());
        if (close == std::string_view::npos) break;
        out.append(text.substr(pos, open - pos));
        std::string name(text.substr(open + kOpen.size(), close - open - kOpen.size()));
        auto it = bindings.find(name);
        if (it == bindings.end()) throw Error(ErrorKind::MissingSlot, "slot '" + name + "' is not bound");
        out.append(it->second);
        pos = close + kClose.size();
    }
    out.append(text.substr(pos));
    return out;
}

std::vector<std::string> split_slot_list(std::string_view s) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto comma = s.find(',', pos);
        if (comma == std::string_view::npos) comma = s.size();
        auto item = s.substr(pos, comma - pos);
        while (!item.empty() && item.front() == ' ') item.remove_prefix(1);
        while (!item.empty() && item.back() == ' ') item.remove_suffix(1);
        if (!item.empty()) out.emplace_back(item);
        pos = comma + 1;
    }
    return out;
}

}  // namespace

std::string_view to_string(TemplateKind kind) {
    switch (kind) {
        case TemplateKind::Add: return "add";
        case TemplateKind::Merge: return "merge";
        case TemplateKind::Retrieve: return "retrieve";
        case TemplateKind::Reflect: return "reflect";
        case TemplateKind::Recommend: return "recommend";
    }
    return "add";
}

std::optional<TemplateKind> parse_template_kind(std::string_view name) {
    for (auto k : kAllTemplateKinds) {
        if (to_string(k) == name) return k;
    }
    return std::nullopt;
}

std::vector<std::string> referenced_slots(const PromptTemplate& tmpl) {
    std::vector<std::string> out;
    for (const auto* part : {&tmpl.task_description, &tmpl.context, &tmpl.format_requirements}) {
        for (auto& name : placeholders(*part)) {
            if (std::find(out.begin(), out.end(), name) == out.end()) out.push_back(std::move(name));
        }
    }
    return out;
}

std::string render(const PromptTemplate& tmpl, const SlotBindings& bindings, std::string_view format_suffix) {
    for (const auto& slot : tmpl.slots) {
        if (!bindings.count(slot)) throw Error(ErrorKind::MissingSlot, "slot '" + slot + "' is not bound");
    }
    std::string out = substitute(tmpl.task_description, bindings);
    out += "\n\n### Context\n";
    out += substitute(tmpl.context, bindings);
    out += "\n\n### Output format\n";
    out += substitute(tmpl.format_requirements, bindings);
    if (!format_suffix.empty()) {
        out += "\n";
        out += format_suffix;
    }
    return out;
}

TemplateSet TemplateSet::parse(std::string_view text) {
    TemplateSet set;
    for (const auto& e : parse_kv_text(text)) {
        if (e.section.empty()) {
            if (e.key != "version") throw Error(ErrorKind::TemplateError, "unknown top-level key '" + e.key + "'");
            auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), set.version_);
            if (ec != std::errc()) throw Error(ErrorKind::TemplateError, "version must be an integer");
            continue;
        }
        if (e.section == "repair") {
            if (e.key != "text") throw Error(ErrorKind::TemplateError, "[repair] only accepts 'text'");
            set.repair_ = e.value;
            continue;
        }
        auto kind = parse_template_kind(e.section);
        if (!kind) throw Error(ErrorKind::TemplateError, "unknown template section [" + e.section + "]");
        auto& t = set.templates_[*kind];
        t.kind = *kind;
        if (e.key == "task") {
            t.task_description = e.value;
        } else if (e.key == "context") {
            t.context = e.value;
        } else if (e.key == "format") {
            t.format_requirements = e.value;
        } else if (e.key == "slots") {
            t.slots = split_slot_list(e.value);
        } else {
            throw Error(ErrorKind::TemplateError, "unknown key '" + e.key + "' in [" + e.section + "]");
        }
    }
    for (auto kind : kAllTemplateKinds) {
        auto it = set.templates_.find(kind);
        std::string name(to_string(kind));
        if (it == set.templates_.end()) throw Error(ErrorKind::TemplateError, "missing template [" + name + "]");
        const auto& t = it->second;
        if (t.task_description.empty() || t.context.empty() || t.format_requirements.empty()) {
            throw Error(ErrorKind::TemplateError, "template [" + name + "] needs task, context and format");
        }
        std::set<std::string> declared(t.slots.begin(), t.slots.end());
        for (const auto& slot : referenced_slots(t)) {
            if (!declared.count(slot)) {
                throw Error(ErrorKind::TemplateError, "template [" + name + "] uses undeclared slot '" + slot + "'");
            }
        }
    }
    if (set.repair_.empty()) throw Error(ErrorKind::TemplateError, "missing [repair] text");
    return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& path) {
    return parse(read_text_file(path));
}

const TemplateSet& TemplateSet::builtin() {
    static const TemplateSet set = parse(builtin_template_text());
    return set;
}

const PromptTemplate& TemplateSet::get(TemplateKind kind) const {
    return templates_.at(kind);
}

Prompt TemplateSet::make(TemplateKind kind, const SlotBindings& bindings) const {
    const auto& t = get(kind);
    Prompt p;
    p.kind = kind;
    p.text = render(t, bindings);
    p.repair_text = render(t, bindings, repair_);
    p.slots = bindings;
    return p;
}

}  // namespace memrec
