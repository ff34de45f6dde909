#include "memrec/config.hpp"
#include "memrec/dialogue.hpp"
#include "memrec/error.hpp"
#include "memrec/experiment.hpp"
#include "memrec/factory.hpp"
#include "memrec/io.hpp"
#include "memrec/memory_bank.hpp"
#include "memrec/service.hpp"
#include "memrec/synthetic.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace memrec;
using ojson = nlohmann::ordered_json;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

int fail(std::string_view kind, const std::string& message, int code = kExitFailure) {
    ojson j;
    j["error"] = std::string(kind);
    j["message"] = message;
    std::cerr << j.dump() << "\n";
    return code;
}

Config load_config(const std::string& path) {
    if (path.empty()) return Config{};
    return Config::load(path);
}

std::vector<std::string> split_list(const std::vector<std::string>& raw) {
    std::vector<std::string> out;
    for (const auto& r : raw) {
        std::stringstream ss(r);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) out.push_back(item);
        }
    }
    return out;
}

Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"memrec: memory-enhanced conversational recommendation"};
    app.require_subcommand(1);

    std::string config_path;

    auto* ingest = app.add_subcommand("ingest", "load and validate sessions + catalog into one corpus file");
    std::string sessions_path, catalog_path, out_path;
    ingest->add_option("sessions", sessions_path)->required()->check(CLI::ExistingFile);
    ingest->add_option("catalog", catalog_path)->required()->check(CLI::ExistingFile);
    ingest->add_option("--out", out_path)->required();

    auto* split = app.add_subcommand("split", "chronological per-user split");
    std::string corpus_path;
    std::size_t n_valid = 1, n_test = 1;
    std::string split_out;
    split->add_option("corpus", corpus_path)->required()->check(CLI::ExistingFile);
    split->add_option("--n-valid", n_valid);
    split->add_option("--n-test", n_test);
    split->add_option("--out", split_out, "defaults to rewriting the input");

    auto* build = app.add_subcommand("build-memory", "run extract_and_add over every Train session");
    std::string store_dir;
    build->add_option("corpus", corpus_path)->required()->check(CLI::ExistingFile);
    build->add_option("--store", store_dir)->required();
    build->add_option("--config", config_path)->check(CLI::ExistingFile);

    auto* evaluate = app.add_subcommand("evaluate", "run variants and write reports");
    std::vector<std::string> variants_raw;
    std::string report_dir, eval_store;
    evaluate->add_option("corpus", corpus_path)->required()->check(CLI::ExistingFile);
    evaluate->add_option("--variant", variants_raw, "variant name(s), comma separated or repeated")->required();
    evaluate->add_option("--report", report_dir)->required();
    evaluate->add_option("--store", eval_store, "use banks from this store instead of building them");
    evaluate->add_option("--config", config_path)->check(CLI::ExistingFile);

    auto* reflect_cmd = app.add_subcommand("reflect", "batch reflection over a run log");
    std::string runlog_path, guidelines_in, guidelines_out;
    reflect_cmd->add_option("--runlog", runlog_path)->required()->check(CLI::ExistingFile);
    reflect_cmd->add_option("--guidelines", guidelines_in, "starting set (default: seed guidelines)");
    reflect_cmd->add_option("--out", guidelines_out, "where to write the result (default: stdout)");
    reflect_cmd->add_option("--corpus", corpus_path)->check(CLI::ExistingFile);
    reflect_cmd->add_option("--config", config_path)->check(CLI::ExistingFile);

    auto* serve = app.add_subcommand("serve", "start the HTTP service");
    serve->add_option("--config", config_path)->check(CLI::ExistingFile);

    auto* inspect = app.add_subcommand("inspect-memory", "print a user's memory bank");
    std::string user_id;
    inspect->add_option("user_id", user_id)->required();
    inspect->add_option("--store", store_dir);
    inspect->add_option("--config", config_path)->check(CLI::ExistingFile);

    auto* synth = app.add_subcommand("synth", "write the synthetic planted-relevance corpus");
    SyntheticOptions synth_opts;
    std::string synth_out;
    synth->add_option("--out", synth_out)->required();
    synth->add_option("--warm-users", synth_opts.warm_users);
    synth->add_option("--cold-users", synth_opts.cold_users);
    synth->add_option("--seed", synth_opts.seed);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("UsageError", e.what(), kExitUsage);
    }

    try {
        if (*ingest) {
            auto corpus = load_corpus(sessions_path, catalog_path);
            save_corpus_file(corpus, out_path);
            ojson j{{"users", corpus.users.size()}, {"sessions", corpus.session_count()}, {"items", corpus.catalog.size()}};
            std::cout << j.dump() << "\n";
            return 0;
        }
        if (*split) {
            auto corpus = chronological_split(load_corpus_file(corpus_path), n_valid, n_test);
            save_corpus_file(corpus, split_out.empty() ? corpus_path : split_out);
            std::map<std::string, std::size_t> counts;
            for (const auto& [_, s] : corpus.split_assignment) ++counts[std::string(to_string(s))];
            std::cout << ojson(counts).dump() << "\n";
            return 0;
        }
        if (*build) {
            auto corpus = load_corpus_file(corpus_path);
            auto rt = make_runtime(load_config(config_path), corpus);
            BankBuildReport report;
            auto banks = build_banks(corpus, *rt.llm, rt.templates, &report);
            MemoryStore store(store_dir);
            std::size_t removed = 0;
            for (auto& [_, bank] : banks) {
                if (rt.delete_threshold > 0) removed += delete_stale(bank, rt.delete_threshold).size();
                store.persist(bank);
            }
            ojson j{{"users", banks.size()}, {"sessions", report.sessions}, {"skipped_sessions", report.skipped_sessions},
                    {"entities", report.entities - removed}};
            std::cout << j.dump() << "\n";
            return 0;
        }
        if (*evaluate) {
            std::vector<VariantSpec> variants;
            for (const auto& name : split_list(variants_raw)) {
                try {
                    variants.push_back(VariantSpec::named(name));
                } catch (const Error& e) {
                    return fail(to_string(e.kind()), e.what(), kExitUsage);
                }
            }
            auto corpus = load_corpus_file(corpus_path);
            auto rt = make_runtime(load_config(config_path), corpus);
            std::optional<std::map<std::string, MemoryBank>> banks;
            if (!eval_store.empty()) {
                MemoryStore store(eval_store);
                banks.emplace();
                for (const auto& [uid, _] : corpus.users) banks->emplace(uid, store.restore(uid));
            }
            std::vector<EvalReport> reports;
            const std::filesystem::path dir(report_dir);
            for (const auto& v : variants) {
                std::string runlog;
                auto sink = [&](const std::string& line) { runlog += line + "\n"; };
                reports.push_back(run_experiment(corpus, v, rt.experiment, rt.ports(), sink, banks ? &*banks : nullptr));
                write_text_file_atomic(dir / ("report_" + v.label + ".json"), report_to_json(reports.back()));
                write_text_file_atomic(dir / ("runlog_" + v.label + ".jsonl"), runlog);
            }
            auto cmp = compare_reports(reports);
            write_text_file_atomic(dir / "comparison.csv", cmp.csv);
            write_text_file_atomic(dir / "comparison.txt", cmp.text);
            std::cout << cmp.text;
            return 0;
        }
        if (*reflect_cmd) {
            Corpus corpus;
            if (!corpus_path.empty()) corpus = load_corpus_file(corpus_path);
            auto rt = make_runtime(load_config(config_path), corpus);
            GuidelineSet set = guidelines_in.empty() ? rt.guidelines : load_guidelines(guidelines_in);
            std::istringstream lines(read_text_file(runlog_path));
            std::string line;
            std::size_t n = 0, line_no = 0, updated = 0;
            while (std::getline(lines, line)) {
                ++line_no;
                if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
                auto j = ojson::parse(line, nullptr, false);
                if (j.is_discarded() || !j.is_object() || !j.contains("trajectory") || !j["trajectory"].is_string())
                    throw Error(ErrorKind::MalformedRecord, "run log line " + std::to_string(line_no) + " has no trajectory", {}, line_no);
                ReflectionRecord rec{j["trajectory"].get<std::string>(), j.value("hit", false) ? Outcome::Hit : Outcome::Miss, {}};
                auto res = reflect(set, rec, *rt.llm, rt.templates);
                if (res.updated) ++updated;
                set = std::move(res.guidelines);
                ++n;
            }
            if (guidelines_out.empty()) {
                std::cout << guidelines_to_json(set);
            } else {
                save_guidelines(set, guidelines_out);
                std::cout << ojson{{"records", n}, {"updated", updated}, {"version", set.version}}.dump() << "\n";
            }
            return 0;
        }
        if (*serve) {
            auto cfg = load_config(config_path);
            Corpus corpus;
            if (cfg.has("service.corpus")) corpus = load_corpus_file(cfg.resolve_path("service.corpus"));
            auto rt = make_runtime(cfg, corpus);
            Service service(rt, corpus.catalog, service_options(cfg));
            g_service = &service;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            service.listen();
            g_service = nullptr;
            return 0;
        }
        if (*inspect) {
            auto cfg = load_config(config_path);
            std::filesystem::path root = store_dir;
            if (root.empty()) root = cfg.has("service.store_root") ? cfg.resolve_path("service.store_root") : "memory_store";
            auto bank = MemoryStore(root).restore(user_id);
            ojson j;
            j["user_id"] = user_id;
            j["clock"] = bank.clock();
            j["entries"] = ojson::array();
            for (const auto& [_, e] : bank.entries())
                j["entries"].push_back({{"entity", e.entity}, {"attitude", e.attitude}, {"last_touched", e.last_touched}});
            std::cout << j.dump(2) << "\n";
            return 0;
        }
        if (*synth) {
            write_synthetic(synth_opts, synth_out);
            return 0;
        }
    } catch (const Error& e) {
        return fail(to_string(e.kind()), e.what());
    } catch (const std::exception& e) {
        return fail("Internal", e.what());
    }
    return kExitFailure;
}
