#include "memrec/error.hpp"
#include "memrec/retrieval.hpp"
#include "memrec/text.hpp"

#include "support.hpp"

#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <random>
#include <set>
#include <thread>

using namespace memrec;
using namespace memrec::testing;

namespace {

MemoryBank bank_of(const std::vector<std::pair<std::string, std::string>>& rows) {
    MemoryBank bank("u");
    const Tick t = bank.advance_clock();
    for (const auto& [e, a] : rows) bank.write(canonicalize(e), a, t);
    return bank;
}

double plain_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb);
}

// Entities sharing at least one word with the conversation, most shared
// words first, then bank order.
std::vector<std::string> overlap_oracle(const std::vector<std::string>& candidates, const std::string& conversation, std::size_t q) {
    std::set<std::string> words;
    for (auto& w : word_tokens(conversation)) words.insert(w);
    std::vector<std::pair<std::size_t, std::string>> hits;
    for (const auto& c : candidates) {
        std::set<std::string> mine;
        for (auto& w : word_tokens(c)) mine.insert(w);
        std::size_t shared = 0;
        for (const auto& w : mine) shared += words.count(w);
        if (shared) hits.emplace_back(shared, c);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < hits.size() && i < q; ++i) out.push_back(hits[i].second);
    return out;
}

const std::vector<std::string> kVocab{"comedy", "horror", "western", "musical", "scarlett", "johansson", "long", "runtimes",
                                      "subtitles", "popcorn", "tanaka", "okafor", "film", "dark", "space"};

}  // namespace

TEST(Cosine, BasicProperties) {
    std::vector<double> a{1, 0, 0}, b{0, 2, 0}, z{0, 0, 0};
    EXPECT_DOUBLE_EQ(cosine(a, a), 1.0);
    EXPECT_DOUBLE_EQ(cosine(a, b), 0.0);
    EXPECT_DOUBLE_EQ(cosine(a, z), 0.0);
    std::vector<double> short_one{1, 0};
    try {
        cosine(a, short_one);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(HashNgramEmbedder, DeterministicNormalizedAndCaseBlind) {
    HashNgramEmbedder emb(64);
    auto a = emb.embed("Scarlett Johansson");
    auto b = emb.embed("  scarlett   JOHANSSON ");
    EXPECT_EQ(a.values, b.values);
    double norm = 0;
    for (double v : a.values) norm += v * v;
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_TRUE(emb.embed("   ").zero);
    EXPECT_FALSE(emb.embed("x").zero);
    EXPECT_GT(cosine(emb.embed("comedy films").values, emb.embed("comedy").values),
              cosine(emb.embed("horror").values, emb.embed("comedy").values));
}

TEST(Prefilter, SmallBankSkipsSimilarity) {
    auto bank = bank_of({{"a", "x"}, {"b", "y"}});
    HashNgramEmbedder emb;
    auto out = prefilter(bank, "anything", emb, 1, 30);
    ASSERT_EQ(out.size(), 2u);
    for (const auto& s : out) EXPECT_EQ(s.score, 1.0);
}

TEST(Prefilter, LargeBankKeepsTopMByBruteForceCosine) {
    std::mt19937_64 rng(4);
    HashNgramEmbedder emb(128);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<std::string, std::string>> rows;
        for (int i = 0; i < 40; ++i) {
            rows.emplace_back("entity " + std::to_string(i) + " " + kVocab[rng() % kVocab.size()], kVocab[rng() % kVocab.size()]);
        }
        auto bank = bank_of(rows);
        std::string context = kVocab[rng() % kVocab.size()] + " " + kVocab[rng() % kVocab.size()];
        const std::size_t m = 1 + rng() % 20;
        auto got = prefilter(bank, context, emb, m, 30);

        std::vector<ScoredEntity> expected;
        auto query = emb.embed(context).values;
        for (const auto& [key, entry] : bank.entries()) expected.push_back({key, plain_cosine(emb.embed(key + " " + entry.attitude).values, query)});
        std::sort(expected.begin(), expected.end(), [](const auto& a, const auto& b) {
            return std::abs(a.score - b.score) > 1e-12 ? a.score > b.score : a.entity < b.entity;
        });
        ASSERT_EQ(got.size(), m);
        for (std::size_t i = 0; i < m; ++i) {
            EXPECT_NEAR(got[i].score, expected[i].score, 1e-9);
        }
        // Same membership, up to ties at the boundary.
        if (m < expected.size() && std::abs(expected[m - 1].score - expected[m].score) > 1e-9) {
            std::set<std::string> a, b;
            for (std::size_t i = 0; i < m; ++i) {
                a.insert(got[i].entity);
                b.insert(expected[i].entity);
            }
            EXPECT_EQ(a, b);
        }
    }
}

TEST(Retrieve, MockSelectionMatchesOverlapOracle) {
    std::mt19937_64 rng(12);
    HashNgramEmbedder emb;
    MockLlm mock;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::pair<std::string, std::string>> rows;
        std::set<std::string> names;
        for (std::size_t n = 1 + rng() % 12; n > 0; --n) {
            std::string name = kVocab[rng() % kVocab.size()];
            if (rng() % 2) name += " " + kVocab[rng() % kVocab.size()];
            if (names.insert(canonicalize(name)).second) rows.emplace_back(name, "likes it");
        }
        auto bank = bank_of(rows);
        std::vector<Utterance> ctx{user("I want " + kVocab[rng() % kVocab.size()] + " and " + kVocab[rng() % kVocab.size()])};
        RetrievalConfig cfg;
        cfg.q = 1 + rng() % 4;
        std::vector<std::string> keys;
        for (const auto& [k, _] : bank.entries()) keys.push_back(k);
        auto expected = overlap_oracle(keys, ctx[0].text, cfg.q);

        const Tick before = bank.clock();
        auto got = retrieve(bank, ctx, mock, emb, cfg);
        EXPECT_EQ(got.entities, expected);
        EXPECT_LE(got.entities.size(), cfg.q);
        EXPECT_EQ(got.entities.size(), got.attitudes.size());
        for (const auto& e : got.entities) {
            EXPECT_TRUE(bank.contains(e));
            EXPECT_EQ(bank.find(e)->last_touched, bank.clock());
        }
        EXPECT_EQ(bank.clock(), before + (expected.empty() ? 0 : 1));
    }
}

TEST(Retrieve, OutOfListAnswersAreRejected) {
    auto bank = bank_of({{"comedy", "loves"}, {"horror", "hates"}});
    auto llm = queued({R"(["Comedy", "made up", "comedy"])"});
    HashNgramEmbedder emb;
    std::vector<Utterance> ctx{user("hi")};
    auto got = retrieve(bank, ctx, llm, emb, RetrievalConfig{});
    EXPECT_EQ(got.entities, std::vector<std::string>{"comedy"});
    EXPECT_EQ(got.attitudes, std::vector<std::string>{"loves"});
    EXPECT_EQ(got.rejected, std::vector<std::string>{"made up"});
    EXPECT_FALSE(got.degraded);
}

TEST(Retrieve, ParseFailureFallsBackToPrefilterOrder) {
    std::vector<std::pair<std::string, std::string>> rows;
    for (int i = 0; i < 35; ++i) rows.emplace_back("topic " + std::to_string(i), "ok");
    rows.emplace_back("space opera", "loves");
    auto bank = bank_of(rows);
    auto llm = queued({"no idea"});
    HashNgramEmbedder emb;
    std::vector<Utterance> ctx{user("space opera tonight")};
    RetrievalConfig cfg;
    auto got = retrieve(bank, ctx, llm, emb, cfg);
    EXPECT_TRUE(got.degraded);
    ASSERT_EQ(got.entities.size(), 3u);
    EXPECT_EQ(got.entities[0], "space opera");
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(got.entities[i], got.prefilter_scores[i].entity);
}

TEST(Retrieve, EmptyBankMakesNoCall) {
    MemoryBank bank("u");
    MockLlm mock;
    HashNgramEmbedder emb;
    std::vector<Utterance> ctx{user("hi")};
    EXPECT_TRUE(retrieve(bank, ctx, mock, emb, RetrievalConfig{}).empty());
    EXPECT_EQ(mock.raw_calls(), 0u);
}

TEST(Retrieve, ConfigValidation) {
    RetrievalConfig cfg;
    cfg.q = 21;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.q = 0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg.q = 3;
    EXPECT_NO_THROW(cfg.validate());
}

TEST(MemoryModes, AllRandomAndSimilar) {
    auto bank = bank_of({{"comedy", "a"}, {"horror", "b"}, {"western", "c"}, {"musical", "d"}});
    auto all = retrieve_all(bank);
    EXPECT_EQ(all.entities.size(), 4u);

    auto r1 = retrieve_random(bank, 2, 5);
    auto r2 = retrieve_random(bank, 2, 5);
    EXPECT_EQ(r1.entities, r2.entities);
    EXPECT_EQ(r1.entities.size(), 2u);
    EXPECT_NE(r1.entities[0], r1.entities[1]);
    EXPECT_EQ(retrieve_random(bank, 10, 1).entities.size(), 4u);

    HashNgramEmbedder emb;
    std::vector<Utterance> ctx{user("a western please")};
    auto sim = retrieve_similar(bank, ctx, emb, 1);
    EXPECT_EQ(sim.entities, std::vector<std::string>{"western"});
}

TEST(HttpEmbedder, ParsesAndChecksDimension) {
    httplib::Server server;
    server.Post("/v1/embeddings", [](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        std::vector<double> v = body["input"] == "wide" ? std::vector<double>{1, 2, 3, 4} : std::vector<double>{3, 4, 0};
        res.set_content(nlohmann::json{{"data", {{{"embedding", v}}}}}.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    HttpEmbedder emb("http://127.0.0.1:" + std::to_string(port), "e", "", 3, 5);
    auto e = emb.embed("hello");
    EXPECT_NEAR(e.values[0], 0.6, 1e-12);
    EXPECT_NEAR(e.values[1], 0.8, 1e-12);
    try {
        emb.embed("wide");
        ADD_FAILURE();
    } catch (const Error& err) {
        EXPECT_EQ(err.kind(), ErrorKind::DimensionMismatch);
    }
    EXPECT_TRUE(emb.embed(" ").zero);
    server.stop();
    t.join();
}
