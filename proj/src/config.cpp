#include "memrec/config.hpp"

#include "memrec/error.hpp"
#include "memrec/io.hpp"

#include <algorithm>
#include <charconv>

namespace memrec {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

[[noreturn]] void config_error(std::size_t line_no, const std::string& what) {
    throw Error(ErrorKind::ConfigError, "line " + std::to_string(line_no) + ": " + what, {}, line_no);
}

std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.push_back(line);
        pos = end + 1;
    }
    return lines;
}

std::string unescape_quoted(std::string_view body, std::size_t line_no) {
    std::string out;
    for (std::size_t i = 0; i < body.size(); ++i) {
        char c = body[i];
        if (c != '\\') {
            out.push_back(c);
            continue;
        }
        if (++i >= body.size()) config_error(line_no, "dangling escape");
        switch (body[i]) {
            case 'n': out.push_back('\n'); break;
            case 't': out.push_back('\t'); break;
            case '"': out.push_back('"'); break;
            case '\\': out.push_back('\\'); break;
            default: config_error(line_no, std::string("unknown escape \\") + body[i]);
        }
    }
    return out;
}

}  // namespace

std::vector<KvEntry> parse_kv_text(std::string_view text) {
    std::vector<KvEntry> entries;
    auto lines = split_lines(text);
    std::string section;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::size_t line_no = i + 1;
        auto line = trim(lines[i]);
        if (line.empty() || line.front() == '#') continue;
        if (line.front() == '[') {
            if (line.back() != ']') config_error(line_no, "unterminated section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            if (section.empty()) config_error(line_no, "empty section name");
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string_view::npos) config_error(line_no, "expected 'key = value'");
        KvEntry e;
        e.section = section;
        e.key = std::string(trim(line.substr(0, eq)));
        e.line_no = line_no;
        if (e.key.empty()) config_error(line_no, "empty key");
        auto rest = trim(line.substr(eq + 1));
        if (rest.substr(0, 3) == R"(""")") {
            // Multi-line block; may close on the same line.
            std::string body(rest.substr(3));
            auto close = body.find(R"(""")");
            if (close != std::string::npos) {
                if (!trim(std::string_view(body).substr(close + 3)).empty()) config_error(line_no, "text after closing quotes");
                e.value = body.substr(0, close);
            } else {
                std::string acc = body;
                bool first = true;
                bool closed = false;
                for (++i; i < lines.size(); ++i) {
                    std::string_view l = lines[i];
                    auto c = l.find(R"(""")");
                    if (!(first && acc.empty())) acc.push_back('\n');
                    first = false;
                    if (c != std::string_view::npos) {
                        acc.append(l.substr(0, c));
                        if (!trim(l.substr(c + 3)).empty()) config_error(i + 1, "text after closing quotes");
                        closed = true;
                        break;
                    }
                    acc.append(l);
                }
                if (!closed) config_error(line_no, "unterminated multi-line string");
                e.value = std::move(acc);
            }
        } else if (!rest.empty() && rest.front() == '"') {
            if (rest.size() < 2 || rest.back() != '"') config_error(line_no, "unterminated string");
            e.value = unescape_quoted(rest.substr(1, rest.size() - 2), line_no);
        } else {
            auto hash = rest.find(" #");
            e.value = std::string(trim(rest.substr(0, hash)));
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

Config Config::parse(std::string_view text) {
    Config cfg;
    for (auto& e : parse_kv_text(text)) {
        std::string key = e.section.empty() ? e.key : e.section + "." + e.key;
        cfg.values_[key] = std::move(e.value);
    }
    return cfg;
}

Config Config::load(const std::filesystem::path& path) {
    Config cfg = parse(read_text_file(path));
    cfg.base_dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    return cfg;
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    std::int64_t v = 0;
    const auto& s = it->second;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::ConfigError, "'" + key + "' is not an integer: " + s);
    }
    return v;
}

std::size_t Config::get_count(const std::string& key, std::size_t fallback) const {
    auto v = get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 1) throw Error(ErrorKind::ConfigError, "'" + key + "' must be at least 1");
    return static_cast<std::size_t>(v);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    const auto& s = it->second;
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw Error(ErrorKind::ConfigError, "'" + key + "' is not a boolean: " + s);
}

std::vector<std::string> Config::unknown_keys(const std::vector<std::string>& known) const {
    std::vector<std::string> out;
    for (const auto& [k, _] : values_) {
        if (std::find(known.begin(), known.end(), k) == known.end()) out.push_back(k);
    }
    return out;
}

std::filesystem::path Config::resolve_path(const std::string& key) const {
    std::filesystem::path p = get_string(key);
    if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
    return base_dir / p;
}

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys{
        "llm.kind", "llm.endpoint", "llm.model", "llm.api_key_env", "llm.retry_budget", "llm.max_in_flight",
        "llm.timeout_seconds",
        "mock.seed", "mock.knowledge",
        "prompts.template_file",
        "embedder.kind", "embedder.endpoint", "embedder.model", "embedder.api_key_env", "embedder.dimension",
        "retrieval.prefilter_m", "retrieval.q", "retrieval.skip_prefilter_below",
        "expert.kind", "expert.candidate_count", "expert.candidates_file",
        "rec.list_length", "rec.reflect_every",
        "memory.delete_threshold",
        "guidelines.file", "guidelines.cap",
        "eval.seed", "eval.per_user_mean",
        "service.bind", "service.port", "service.store_root", "service.corpus", "service.cors_origin",
        "service.reflect_on_end",
    };
    return keys;
}

}  // namespace memrec
