#include "memrec/config.hpp"
#include "memrec/dialogue.hpp"
#include "memrec/error.hpp"
#include "memrec/experiment.hpp"
#include "memrec/factory.hpp"
#include "memrec/memory_bank.hpp"
#include "memrec/metrics.hpp"
#include "memrec/synthetic.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <map>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace memrec;

namespace {

std::map<std::string, std::size_t> split_counts(const Corpus& c) {
    std::map<std::string, std::size_t> out;
    for (const auto& [_, s] : c.split_assignment) ++out[std::string(to_string(s))];
    return out;
}

py::dict bank_dict(const MemoryBank& bank) {
    py::list entries;
    for (const auto& [_, e] : bank.entries()) {
        py::dict d;
        d["entity"] = e.entity;
        d["attitude"] = e.attitude;
        d["last_touched"] = e.last_touched;
        entries.append(d);
    }
    py::dict out;
    out["user_id"] = bank.user_id();
    out["clock"] = bank.clock();
    out["entries"] = entries;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    static py::exception<Error> memrec_error(m, "MemrecError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(memrec_error.ptr())(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(memrec_error.ptr(), exc.ptr());
        }
    });

    m.attr("METRIC_CUTS") = std::vector<std::size_t>(kMetricCuts.begin(), kMetricCuts.end());

    m.def("hit_rate_at_k", [](const std::vector<std::string>& ranked, const std::set<std::string>& truth, std::size_t k) {
        return hit_rate_at_k(ranked, truth, k);
    });
    m.def("mrr_at_k", [](const std::vector<std::string>& ranked, const std::set<std::string>& truth, std::size_t k) {
        return mrr_at_k(ranked, truth, k);
    });
    m.def("ndcg_at_k", [](const std::vector<std::string>& ranked, const std::set<std::string>& truth, std::size_t k) {
        return ndcg_at_k(ranked, truth, k);
    });
    m.def("count_tokens", [](const std::string& text) { return count_tokens(text); });

    m.def(
        "synth",
        [](const std::filesystem::path& out, std::size_t warm_users, std::size_t cold_users, std::uint64_t seed) {
            write_synthetic({warm_users, cold_users, seed}, out);
        },
        py::arg("out"), py::arg("warm_users") = 24, py::arg("cold_users") = 6, py::arg("seed") = 7);

    py::class_<Corpus>(m, "Corpus")
        .def_property_readonly("user_ids",
                               [](const Corpus& c) {
                                   std::vector<std::string> ids;
                                   for (const auto& [uid, _] : c.users) ids.push_back(uid);
                                   return ids;
                               })
        .def_property_readonly("session_count", &Corpus::session_count)
        .def_property_readonly("item_count", [](const Corpus& c) { return c.catalog.size(); })
        .def("split_counts", &split_counts)
        .def("save", [](const Corpus& c, const std::filesystem::path& path) { save_corpus_file(c, path); })
        .def("__eq__", [](const Corpus& a, const Corpus& b) { return a == b; });

    m.def(
        "load_corpus",
        [](const std::filesystem::path& sessions, std::optional<std::filesystem::path> catalog) { return load_corpus(sessions, catalog); },
        py::arg("sessions"), py::arg("catalog") = py::none());
    m.def("load_corpus_file", &load_corpus_file);
    m.def("chronological_split", &chronological_split, py::arg("corpus"), py::arg("n_valid") = 1, py::arg("n_test") = 1);

    m.def("variant_names", &VariantSpec::names);
    m.def(
        "evaluate",
        [](const Corpus& corpus, const std::string& variant, const std::string& config_text) {
            auto rt = make_runtime(Config::parse(config_text), corpus);
            return report_to_json(run_experiment(corpus, VariantSpec::named(variant), rt.experiment, rt.ports()));
        },
        py::arg("corpus"), py::arg("variant") = "base", py::arg("config") = "");

    m.def(
        "build_memory",
        [](const Corpus& corpus, const std::filesystem::path& store_dir, const std::string& config_text) {
            auto rt = make_runtime(Config::parse(config_text), corpus);
            BankBuildReport report;
            auto banks = build_banks(corpus, *rt.llm, rt.templates, &report);
            MemoryStore store(store_dir);
            for (const auto& [_, bank] : banks) store.persist(bank);
            py::dict out;
            out["users"] = banks.size();
            out["sessions"] = report.sessions;
            out["skipped_sessions"] = report.skipped_sessions;
            out["entities"] = report.entities;
            return out;
        },
        py::arg("corpus"), py::arg("store"), py::arg("config") = "");
    m.def("restore_memory", [](const std::filesystem::path& store_dir, const std::string& user_id) {
        return bank_dict(MemoryStore(store_dir).restore(user_id));
    });
    m.def("stored_users", [](const std::filesystem::path& store_dir) { return MemoryStore(store_dir).users(); });
}
