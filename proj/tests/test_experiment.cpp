#include "memrec/error.hpp"
#include "memrec/experiment.hpp"
#include "memrec/factory.hpp"
#include "memrec/text.hpp"

#include "scenarios.hpp"
#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <charconv>
#include <set>
#include <sstream>

using namespace memrec;
using namespace memrec::testing;
using json = nlohmann::json;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) out.push_back(cell);
    return out;
}

double parse_double(const std::string& s) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    EXPECT_EQ(ec, std::errc()) << s;
    EXPECT_EQ(ptr, s.data() + s.size()) << s;
    return v;
}

}  // namespace

TEST(Variants, NamesAndFlags) {
    for (const auto& n : VariantSpec::names()) EXPECT_EQ(VariantSpec::named(n).label, n);
    auto gm = VariantSpec::named("wo_gm");
    EXPECT_TRUE(gm.without_ck && gm.without_rg && !gm.without_um);
    EXPECT_EQ(VariantSpec::named("sim").memory_mode, MemoryMode::Sim);
    EXPECT_FALSE(VariantSpec::named("manual_rg").reflective());
    EXPECT_TRUE(VariantSpec::named("base").reflective());
    try {
        VariantSpec::named("w/o everything");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::UnknownVariant);
    }
    VariantSpec bad;
    bad.manual_rg = bad.without_rg = true;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(ScoreTarget, ValuesAtEveryCut) {
    std::vector<std::string> ranked;
    for (int i = 0; i < 20; ++i) ranked.push_back("i" + std::to_string(i));
    auto s = score_target(ranked, "i6");  // rank 7
    EXPECT_EQ(s.hr[0], 0.0);
    EXPECT_EQ(s.hr[1], 1.0);
    EXPECT_DOUBLE_EQ(s.mrr[2], 1.0 / 7.0);
    EXPECT_DOUBLE_EQ(s.ndcg[1], 1.0 / 3.0);
    auto miss = score_target(ranked, "nope");
    EXPECT_EQ(miss.hr[2], 0.0);
}

TEST(BuildBanks, OnlyTrainSessionsContribute) {
    auto corpus = load_fixture("synthetic");
    auto rt = make_runtime(Config{}, corpus);
    BankBuildReport report;
    auto banks = build_banks(corpus, *rt.llm, rt.templates, &report);
    EXPECT_EQ(banks.size(), corpus.users.size());
    EXPECT_EQ(report.skipped_sessions, 0u);
    std::size_t train = 0;
    for (const auto& [sid, split] : corpus.split_assignment) train += split == Split::Train;
    EXPECT_EQ(report.sessions, train);
    std::size_t entities = 0;
    for (const auto& [_, b] : banks) entities += b.size();
    EXPECT_EQ(report.entities, entities);
    EXPECT_GT(entities, 0u);
}

TEST(Experiment, ReplayIsByteIdenticalAcrossRunsAndUserOrder) {
    auto corpus = load_fixture("synthetic");
    auto first = run_variant(corpus, "base");
    auto second = run_variant(corpus, "base");
    auto shuffled = run_variant(shuffled_reload(corpus, 123), "base");
    EXPECT_EQ(first.json, second.json);
    EXPECT_EQ(first.json, shuffled.json);
    EXPECT_EQ(first.runlog, shuffled.runlog);
}

TEST(Experiment, WithoutCollaborativeKnowledgeSendsEmptyExpertBlock) {
    auto corpus = load_fixture("synthetic");
    auto run = run_variant(corpus, "wo_ck");
    ASSERT_EQ(run.runlog.size(), run.report.points);
    for (const auto& line : run.runlog) {
        auto j = json::parse(line);
        EXPECT_EQ(j["expert_block"], "[]");
        EXPECT_NE(j["trajectory"].get<std::string>().find("Expert model's recommended movies:\n[]"), std::string::npos);
    }
}

TEST(Experiment, RunLogCarriesPointAuditFields) {
    auto corpus = load_fixture("synthetic");
    auto run = run_variant(corpus, "base");
    ASSERT_FALSE(run.runlog.empty());
    auto j = json::parse(run.runlog.front());
    for (const char* key : {"point", "items", "provenance", "retrieved_entities", "expert_block", "ground_truth", "hit", "degraded", "trajectory"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["items"].size(), 20u);
}

TEST(Experiment, TokenChainOnSyntheticCorpus) {
    auto corpus = load_fixture("synthetic");
    auto r = run_variant(corpus, "base").report;
    EXPECT_LE(r.tokens.retrieved, r.tokens.total_um);
    EXPECT_LE(r.tokens.total_um, r.tokens.total_dialogues);
    EXPECT_LE(r.tokens.retrieved, 0.1 * r.tokens.total_dialogues);
    EXPECT_GT(r.tokens.retrieved, 0.0);

    // Dialogue tokens recomputed directly.
    double sum = 0;
    std::size_t users = 0;
    for (const auto& [uid, u] : corpus.users) {
        ++users;
        for (const auto& s : u.sessions)
            if (corpus.split_of(s.session_id) == Split::Train)
                for (const auto& t : s.utterances) sum += static_cast<double>(count_tokens(t.text));
    }
    EXPECT_DOUBLE_EQ(r.tokens.total_dialogues, sum / static_cast<double>(users));
}

TEST(Experiment, OursRetrievesPlantedEntitiesMostPrecisely) {
    auto corpus = load_fixture("synthetic");
    auto ours = run_variant(corpus, "ours").report;
    auto all = run_variant(corpus, "all").report;
    auto rnd = run_variant(corpus, "rand").report;
    auto sim = run_variant(corpus, "sim").report;
    EXPECT_GT(ours.precision_points, 0u);
    EXPECT_GT(ours.retrieval_precision, all.retrieval_precision);
    EXPECT_GT(ours.retrieval_precision, rnd.retrieval_precision);
    EXPECT_GE(ours.retrieval_precision, sim.retrieval_precision);
}

TEST(Experiment, AdversarialRetrieverIsFullyRejected) {
    auto corpus = load_fixture("synthetic");
    auto rt = make_runtime(Config{}, corpus);
    MockLlm adversary(MockKnowledge::from_corpus(corpus),
                      {{"", R"(["invented entity", "another fake"])", TemplateKind::Retrieve}});
    ExperimentPorts ports{adversary, *rt.embedder, rt.expert.get(), rt.templates};
    std::size_t injected_seen = 0;
    auto report = run_experiment(corpus, VariantSpec::named("ours"), rt.experiment, ports, [&](const std::string& line) {
        auto j = json::parse(line);
        for (const auto& e : j["retrieved_entities"]) {
            EXPECT_NE(e, "invented entity");
            EXPECT_NE(e, "another fake");
        }
        ++injected_seen;
    });
    EXPECT_EQ(injected_seen, report.points);
    EXPECT_EQ(report.rejected_entities, 2 * report.points);
}

TEST(Experiment, ColdUsersBenefitFromGeneralMemory) {
    auto corpus = load_fixture("synthetic_cold");
    auto full = run_variant(corpus, "base").report;
    auto wo_gm = run_variant(corpus, "wo_gm").report;
    EXPECT_GT(full.cold_users, 0u);
    EXPECT_GT(full.cold.samples, 0u);
    EXPECT_GT(full.cold.hr[0], wo_gm.cold.hr[0]);
}

TEST(Experiment, ColdMeansNoTrainSessions) {
    auto corpus = load_fixture("synthetic_cold");
    auto r = run_variant(corpus, "base").report;
    std::size_t cold = 0;
    for (const auto& [uid, u] : corpus.users) {
        bool any_train = false;
        for (const auto& s : u.sessions) any_train = any_train || corpus.split_of(s.session_id) == Split::Train;
        cold += !any_train;
    }
    EXPECT_EQ(r.cold_users, cold);
    EXPECT_EQ(r.warm_users + r.cold_users, corpus.users.size());
}

TEST(Experiment, PerUserMeanMatchesManualAggregation) {
    // Two users, one with two points and one with one point.
    auto sessions = std::vector<DialogueSession>{
        make_session("a1", "a", 1, {user("hi"), sys("x", {}, {"m1"})}),
        make_session("a2", "a", 2, {user("hi"), sys("x", {}, {"m1"}), user("more"), sys("y", {}, {"m2"})}),
        make_session("b1", "b", 3, {user("hi"), sys("x", {}, {"m9"})}),
    };
    auto corpus = corpus_of(sessions);
    for (int i = 1; i <= 9; ++i) corpus.catalog.ensure("m" + std::to_string(i));
    for (auto& [sid, split] : corpus.split_assignment) split = sid == "a1" ? Split::Train : Split::Test;
    // Model always answers m1 first, then nothing else.
    MockLlm mock({}, {{"", R"(["m1"])", TemplateKind::Recommend}});
    HashNgramEmbedder emb;
    ExperimentConfig cfg;
    cfg.pipeline.list_length = 1;
    cfg.per_user_mean = true;
    ExperimentPorts ports{mock, emb, nullptr, TemplateSet::builtin()};
    auto r = run_experiment(corpus, VariantSpec::named("wo_rg"), cfg, ports);
    // a: m1 hit (1), m2 miss (0) -> 0.5; b: miss -> 0; mean of users 0.25.
    EXPECT_EQ(r.all.samples, 3u);
    EXPECT_DOUBLE_EQ(r.all.hr[0], 0.25);
    cfg.per_user_mean = false;
    auto p = run_experiment(corpus, VariantSpec::named("wo_rg"), cfg, ports);
    EXPECT_DOUBLE_EQ(p.all.hr[0], 1.0 / 3.0);
    EXPECT_EQ(p.aggregation, "per_point");
    EXPECT_EQ(r.aggregation, "per_user");
}

TEST(Experiment, UnreachableModelFallsBackAtEveryPoint) {
    auto corpus = load_fixture("synthetic");
    auto rt = make_runtime(Config{}, corpus);
    auto banks = build_banks(corpus, *rt.llm, rt.templates);
    rt.mock->set_unavailable(true);
    std::vector<std::string> log;
    auto r = run_experiment(corpus, VariantSpec::named("base"), rt.experiment, rt.ports(),
                            [&](const std::string& l) { log.push_back(l); }, &banks);
    EXPECT_EQ(r.failed_points, r.points);
    EXPECT_EQ(r.degraded_points, r.points);
    for (const auto& l : log) {
        auto j = json::parse(l);
        EXPECT_TRUE(j["degraded"].get<bool>());
        EXPECT_EQ(j["items"].size(), 20u);
    }
}

TEST(Experiment, ReflectionRunsOnScheduleForReflectiveVariantsOnly) {
    auto corpus = load_fixture("synthetic");
    Config cfg;
    cfg.set("rec.reflect_every", "5");
    auto base = run_variant(corpus, "base", cfg).report;
    EXPECT_EQ(base.guidelines_version, base.points / 5);
    EXPECT_LE(base.guidelines_size, 10u);
    auto manual = run_variant(corpus, "manual_rg", cfg).report;
    EXPECT_EQ(manual.guidelines_version, 0u);
    EXPECT_EQ(manual.guidelines_size, 2u);
}

TEST(Compare, CsvRoundTripsReportValues) {
    auto corpus = load_fixture("synthetic_cold");
    std::vector<EvalReport> reports;
    for (const char* v : {"base", "wo_um", "wo_ck", "sim"}) reports.push_back(run_variant(corpus, v).report);
    auto cmp = compare_reports(reports);

    std::istringstream in(cmp.csv);
    std::string header;
    std::getline(in, header);
    auto cols = split_csv_line(header);
    ASSERT_EQ(cols.size(), 13u);
    EXPECT_EQ(cols[4], "HR@5");
    EXPECT_EQ(cols[12], "NDCG@20");
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) {
        auto cells = split_csv_line(line);
        ASSERT_EQ(cells.size(), cols.size()) << line;
        const auto& r = *std::find_if(reports.begin(), reports.end(), [&](const EvalReport& x) { return x.variant == cells[0]; });
        const MetricSummary& m = cells[1] == "all" ? r.all : cells[1] == "warm" ? r.warm : r.cold;
        const MetricSummary& b = cells[1] == "all" ? reports[0].all : cells[1] == "warm" ? reports[0].warm : reports[0].cold;
        EXPECT_EQ(std::stoul(cells[3]), m.samples);
        for (std::size_t c = 0; c < 3; ++c) {
            const bool delta = cells[2] == "delta";
            EXPECT_EQ(parse_double(cells[4 + c]), delta ? m.hr[c] - b.hr[c] : m.hr[c]);
            EXPECT_EQ(parse_double(cells[7 + c]), delta ? m.mrr[c] - b.mrr[c] : m.mrr[c]);
            EXPECT_EQ(parse_double(cells[10 + c]), delta ? m.ndcg[c] - b.ndcg[c] : m.ndcg[c]);
        }
        ++rows;
    }
    EXPECT_EQ(rows, reports.size() * 3 * 2);
    // Text table: one header, 3 groups x reports rows, blank line, token table.
    EXPECT_NE(cmp.text.find("HR@5"), std::string::npos);
    EXPECT_NE(cmp.text.find("retrieved"), std::string::npos);
}

TEST(Compare, MismatchedCutsAreRejected) {
    EvalReport a, b;
    b.cuts = {1, 3};
    std::vector<EvalReport> reports{a, b};
    try {
        compare_reports(reports);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MismatchedCuts);
    }
}

TEST(ReportJson, HasGroupsAndTokenRule) {
    auto corpus = load_fixture("synthetic");
    auto j = json::parse(run_variant(corpus, "base").json);
    for (const char* g : {"all", "warm", "cold"}) {
        for (const char* k : {"samples", "HR@5", "HR@10", "HR@20", "MRR@5", "MRR@10", "MRR@20", "NDCG@5", "NDCG@10", "NDCG@20"})
            EXPECT_TRUE(j["groups"][g].contains(k)) << g << " " << k;
    }
    EXPECT_EQ(j["cuts"], json::array({5, 10, 20}));
    EXPECT_TRUE(j["tokens"].contains("rule"));
}
