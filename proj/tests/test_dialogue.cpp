#include "memrec/dialogue.hpp"
#include "memrec/error.hpp"
#include "memrec/synthetic.hpp"

#include "support.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <random>
#include <set>

using namespace memrec;
using namespace memrec::testing;
using json = nlohmann::json;

namespace {

std::string session_line(const std::string& sid, const std::string& uid, const std::string& time, const json& turns) {
    json j{{"session_id", sid}, {"user_id", uid}, {"session_time", time}, {"turns", turns}};
    return j.dump() + "\n";
}

json simple_turns() {
    return json::array({{{"speaker", "user"}, {"text", "I liked Her"}, {"items", {"her"}}, {"ground_truth", json::array()}},
                        {{"speaker", "system"}, {"text", "Try Lost in Translation"}, {"items", {"lit"}}, {"ground_truth", {"lit"}}}});
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::InvalidArgument;
}

// Random corpus: users with 1..6 sessions, ground truth sprinkled on system turns.
Corpus random_corpus(std::mt19937_64& rng, std::size_t users) {
    std::vector<DialogueSession> sessions;
    for (std::size_t u = 0; u < users; ++u) {
        const std::size_t n = 1 + rng() % 6;
        for (std::size_t s = 0; s < n; ++s) {
            std::vector<Utterance> turns;
            const std::size_t len = 1 + rng() % 7;
            for (std::size_t t = 0; t < len; ++t) {
                std::string item = "i" + std::to_string(rng() % 12);
                if (t % 2 == 0) {
                    turns.push_back(memrec::testing::user("u says " + item, {item}));
                } else {
                    std::vector<std::string> truth;
                    if (rng() % 2) truth.push_back("i" + std::to_string(rng() % 12));
                    turns.push_back(memrec::testing::sys("s says " + item, {item}, truth));
                }
            }
            sessions.push_back(make_session("s" + std::to_string(u) + "_" + std::to_string(s), "user" + std::to_string(u),
                                            static_cast<int>(1 + rng() % 28), std::move(turns)));
        }
    }
    return corpus_of(std::move(sessions));
}

}  // namespace

TEST(LoadCorpus, TwoUsersThreeSessionsEach) {
    std::string text;
    for (int u = 0; u < 2; ++u) {
        for (int s = 0; s < 3; ++s) {
            text += session_line("u" + std::to_string(u) + "s" + std::to_string(s), "u" + std::to_string(u),
                                 "2024-01-0" + std::to_string(3 - s) + "T00:00:00Z", simple_turns());
        }
    }
    auto corpus = parse_sessions_jsonl(text);
    EXPECT_EQ(corpus.users.size(), 2u);
    EXPECT_EQ(corpus.session_count(), 6u);
    // Sessions are re-sorted chronologically.
    const auto& sessions = corpus.users.at("u0").sessions;
    EXPECT_EQ(sessions.front().session_id, "u0s2");
    EXPECT_EQ(sessions.back().session_id, "u0s0");
    for (const auto& [sid, split] : corpus.split_assignment) EXPECT_EQ(split, Split::Train) << sid;
}

TEST(LoadCorpus, EmptyFileGivesEmptyCorpus) {
    auto corpus = parse_sessions_jsonl("");
    EXPECT_TRUE(corpus.users.empty());
    EXPECT_EQ(corpus.catalog.size(), 0u);
    EXPECT_TRUE(parse_sessions_jsonl("\n  \n").users.empty());
}

TEST(LoadCorpus, TiesInTimeBreakBySessionId) {
    std::string text = session_line("b", "u", "2024-01-01T00:00:00Z", simple_turns()) +
                       session_line("a", "u", "2024-01-01T00:00:00Z", simple_turns());
    auto corpus = parse_sessions_jsonl(text);
    EXPECT_EQ(corpus.users.at("u").sessions[0].session_id, "a");
}

TEST(LoadCorpus, SchemaViolationsAreMalformedWithLineNumber) {
    const std::string good = session_line("ok", "u", "2024-01-01T00:00:00Z", simple_turns());
    std::vector<std::string> bad = {
        R"({"session_id":"x","session_time":"2024-01-01T00:00:00Z","turns":[{"speaker":"user","text":"hi"}]})",
        R"({"session_id":"x","user_id":"","session_time":"2024-01-01T00:00:00Z","turns":[{"speaker":"user","text":"hi"}]})",
        R"({"session_id":"x","user_id":"u","session_time":"yesterday","turns":[{"speaker":"user","text":"hi"}]})",
        R"({"session_id":"x","user_id":"u","session_time":"2024-01-01T00:00:00Z","turns":[]})",
        R"({"session_id":"x","user_id":"u","session_time":"2024-01-01T00:00:00Z","turns":[{"speaker":"bot","text":"hi"}]})",
        R"({"session_id":"x","user_id":"u","session_time":"2024-01-01T00:00:00Z","turns":[{"speaker":"user","text":"hi","ground_truth":["a"]}]})",
        R"({"session_id":"x","user_id":"u","session_time":"2024-01-01T00:00:00Z","turns":[{"speaker":"user","text":5}]})",
        R"(not json at all)",
        R"(["an","array"])",
    };
    for (const auto& line : bad) {
        try {
            parse_sessions_jsonl(good + line + "\n");
            ADD_FAILURE() << "accepted: " << line;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::MalformedRecord) << line;
            EXPECT_EQ(e.line_no(), 2u) << line;
        }
    }
}

TEST(LoadCorpus, DuplicateSessionId) {
    std::string text = session_line("same", "u1", "2024-01-01T00:00:00Z", simple_turns()) +
                       session_line("same", "u2", "2024-01-02T00:00:00Z", simple_turns());
    EXPECT_EQ(kind_of([&] { parse_sessions_jsonl(text); }), ErrorKind::DuplicateSessionId);
}

TEST(LoadCorpus, CatalogIsUnionOfDeclaredAndMentioned) {
    std::string catalog = R"({"item_id":"her","title":"Her","attrs":{"genre":"romance"}})" "\n"
                          R"({"item_id":"unused","title":"Unused Film"})" "\n";
    auto corpus = parse_sessions_jsonl(session_line("s", "u", "2024-01-01T00:00:00Z", simple_turns()), catalog);
    EXPECT_TRUE(corpus.catalog.contains("her"));
    EXPECT_TRUE(corpus.catalog.contains("lit"));
    EXPECT_TRUE(corpus.catalog.contains("unused"));
    EXPECT_EQ(corpus.catalog.title_of("her"), "Her");
    EXPECT_EQ(corpus.catalog.find("her")->attrs.at("genre"), "romance");
}

TEST(LoadCorpus, AnnotationsAndRelevantEntitiesSurviveRoundTrip) {
    json turns = simple_turns();
    turns[0]["annotations"] = {{"Her", "liked it"}};
    turns[1]["relevant_entities"] = {"Her"};
    auto corpus = parse_sessions_jsonl(session_line("s", "u", "2024-01-01T00:00:00Z", turns));
    const auto& u = corpus.users.at("u").sessions[0].utterances;
    ASSERT_EQ(u[0].annotations.size(), 1u);
    EXPECT_EQ(u[0].annotations[0].second, "liked it");
    EXPECT_EQ(u[1].relevant_entities, std::vector<std::string>{"Her"});
    EXPECT_EQ(parse_sessions_jsonl(sessions_to_jsonl(corpus), catalog_to_jsonl(corpus.catalog)), corpus);
}

TEST(LoadCorpus, SerializeThenLoadIsIdentity) {
    std::mt19937_64 rng(11);
    auto corpus = chronological_split(random_corpus(rng, 10));
    auto reloaded = parse_sessions_jsonl(sessions_to_jsonl(corpus), catalog_to_jsonl(corpus.catalog));
    // Split assignment is not part of the sessions file.
    reloaded.split_assignment = corpus.split_assignment;
    EXPECT_EQ(reloaded, corpus);
    EXPECT_EQ(corpus_from_json(corpus_to_json(corpus)), corpus);
}

TEST(Rfc3339, ParsesOffsetsAndFractions) {
    auto z = parse_rfc3339("2024-03-01T12:00:00Z");
    auto plus = parse_rfc3339("2024-03-01T14:30:00+02:30");
    ASSERT_TRUE(z && plus);
    EXPECT_EQ(*z, *plus);
    auto frac = parse_rfc3339("2024-03-01T12:00:00.25Z");
    ASSERT_TRUE(frac);
    EXPECT_EQ((*frac - *z).count(), 250);
    EXPECT_EQ(format_rfc3339(*frac), "2024-03-01T12:00:00.250Z");
    EXPECT_EQ(format_rfc3339(*z), "2024-03-01T12:00:00Z");
    for (const char* bad : {"2024-13-01T00:00:00Z", "2024-03-01", "2024-03-01T00:00:00", "2024-03-01T00:00:00Zjunk"})
        EXPECT_FALSE(parse_rfc3339(bad)) << bad;
}

TEST(ChronologicalSplit, FiveSessionsGiveThreeOneOne) {
    std::vector<DialogueSession> s;
    for (int i = 1; i <= 5; ++i) s.push_back(make_session("s" + std::to_string(i), "u", i, {user("hi")}));
    auto c = chronological_split(corpus_of(s), 1, 1);
    EXPECT_EQ(c.split_of("s1"), Split::Train);
    EXPECT_EQ(c.split_of("s3"), Split::Train);
    EXPECT_EQ(c.split_of("s4"), Split::Valid);
    EXPECT_EQ(c.split_of("s5"), Split::Test);
}

TEST(ChronologicalSplit, SingleSessionUserIsAllTest) {
    auto c = chronological_split(corpus_of({make_session("only", "cold", 1, {user("hi")})}), 1, 1);
    EXPECT_EQ(c.split_of("only"), Split::Test);
}

TEST(ChronologicalSplit, RejectsZeroTestSessions) {
    EXPECT_EQ(kind_of([] { chronological_split(Corpus{}, 1, 0); }), ErrorKind::InvalidArgument);
}

TEST(ChronologicalSplit, PartitionAndTemporalOrderOnRandomCorpora) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto c = chronological_split(random_corpus(rng, 10), rng() % 3, 1 + rng() % 2);
        std::size_t assigned = 0;
        for (const auto& [uid, user] : c.users) {
            SessionTime last_train{SessionTime::min()};
            SessionTime first_test{SessionTime::max()};
            int phase = 0;
            for (const auto& s : user.sessions) {
                ASSERT_EQ(c.split_assignment.count(s.session_id), 1u);
                ++assigned;
                const int p = static_cast<int>(c.split_of(s.session_id));
                EXPECT_GE(p, phase) << "split order broken for " << uid;
                phase = p;
                if (p == 0) last_train = std::max(last_train, s.session_time);
                if (p == 2) first_test = std::min(first_test, s.session_time);
            }
            EXPECT_LE(last_train, first_test);
        }
        EXPECT_EQ(assigned, c.session_count());
        EXPECT_EQ(c.split_assignment.size(), c.session_count());
    }
}

TEST(FilterDuplicateTargets, ClearsGroundTruthMentionedEarlier) {
    auto s = make_session("s", "u", 1,
                          {user("hello"), sys("seen Her?", {"her"}), user("yes"), user("more"), sys("Her again", {"her"}, {"her"})});
    auto c = corpus_of({s});
    EXPECT_EQ(filter_duplicate_targets(c), 1u);
    EXPECT_TRUE(c.users.at("u").sessions[0].utterances[4].ground_truth_items.empty());
}

TEST(FilterDuplicateTargets, NoOverlapLeavesCorpusUnchanged) {
    auto c = corpus_of({make_session("s", "u", 1, {user("hello", {"a"}), sys("try b", {"b"}, {"b"})})});
    auto before = c;
    EXPECT_EQ(filter_duplicate_targets(c), 0u);
    EXPECT_EQ(c, before);
}

TEST(FilterDuplicateTargets, ClearsExactlyThePlantedDuplicates) {
    std::mt19937_64 rng(3);
    std::vector<DialogueSession> sessions;
    std::set<std::pair<std::string, int>> planted;
    for (int i = 0; i < 200; ++i) {
        const bool dup = rng() % 10 < 3;
        const std::string sid = "s" + std::to_string(i);
        const std::string target = dup ? "m" + std::to_string(i) : "fresh" + std::to_string(i);
        sessions.push_back(make_session(sid, "u" + std::to_string(i % 7), 1 + i % 28,
                                        {user("I watched m" + std::to_string(i), {"m" + std::to_string(i)}), sys("ok"),
                                         user("and then?"), sys("try it", {target}, {target})}));
        if (dup) planted.insert({sid, 4});
    }
    auto c = corpus_of(sessions);
    EXPECT_EQ(filter_duplicate_targets(c), planted.size());
    for (const auto& [_, u] : c.users) {
        for (const auto& s : u.sessions) {
            const bool cleared = s.utterances[3].ground_truth_items.empty();
            EXPECT_EQ(cleared, planted.count({s.session_id, 4}) == 1) << s.session_id;
        }
    }
}

TEST(FilterDuplicateTargets, InvariantHoldsOnRandomCorpora) {
    std::mt19937_64 rng(8);
    auto c = random_corpus(rng, 15);
    filter_duplicate_targets(c);
    for (const auto& split : {Split::Train}) {
        for (const auto& p : evaluation_points(c, split)) {
            auto earlier = mentioned_items(p.context);
            for (const auto& t : p.ground_truth) EXPECT_EQ(std::count(earlier.begin(), earlier.end(), t), 0);
        }
    }
}

TEST(EvaluationPoints, OnePerSystemTurnWithGroundTruth) {
    auto s = make_session("s", "u", 1,
                          {user("a"), sys("b", {}, {"x"}), user("c"), user("d"), user("e"), sys("f", {}, {"y"})});
    auto points = evaluation_points(corpus_of({s}), Split::Train);
    ASSERT_EQ(points.size(), 2u);
    EXPECT_EQ(points[0].turn_index, 2);
    EXPECT_EQ(points[0].context.size(), 1u);
    EXPECT_EQ(points[1].turn_index, 6);
    EXPECT_EQ(points[1].context.size(), 5u);
}

TEST(EvaluationPoints, EmptyForMissingSplit) {
    auto c = chronological_split(corpus_of({make_session("s", "u", 1, {user("a"), sys("b", {}, {"x"})})}));
    EXPECT_TRUE(evaluation_points(c, Split::Train).empty());
    EXPECT_EQ(evaluation_points(c, Split::Test).size(), 1u);
}

TEST(EvaluationPoints, CountMatchesFullScan) {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 10; ++trial) {
        auto c = chronological_split(random_corpus(rng, 12));
        for (auto split : {Split::Train, Split::Valid, Split::Test}) {
            std::size_t expected = 0;
            for (const auto& [_, u] : c.users)
                for (const auto& s : u.sessions)
                    if (c.split_of(s.session_id) == split)
                        for (const auto& t : s.utterances) expected += t.speaker == Speaker::System && !t.ground_truth_items.empty();
            EXPECT_EQ(evaluation_points(c, split).size(), expected);
        }
    }
}

TEST(Catalog, ResolvesTitlesAfterCanonicalization) {
    Catalog cat;
    cat.add({"m1", "Spider-Man: Homecoming", {}});
    cat.add({"m2", "Her", {}});
    EXPECT_EQ(cat.resolve("spiderman homecoming"), "m1");
    EXPECT_EQ(cat.resolve("  HER! "), "m2");
    EXPECT_EQ(cat.resolve("m2"), "m2");
    EXPECT_FALSE(cat.resolve("Herbie"));
    EXPECT_EQ(cat.find_mentions("I loved her and also Spider-Man: Homecoming"), (std::vector<std::string>{"m2", "m1"}));
    EXPECT_TRUE(cat.find_mentions("Herbie fully loaded").empty());
}

TEST(RenderConversation, OneLinePerTurn) {
    std::vector<Utterance> ctx{user("Hi\nthere"), sys("Hello")};
    EXPECT_EQ(render_conversation(ctx), "User: Hi there\nSystem: Hello");
}

TEST(Synthetic, FixtureMatchesGenerator) {
    // The bundled fixture is the generator's output; regenerate with `memrec synth`.
    auto bundled = load_corpus(data_dir() / "synthetic_cold" / "sessions.jsonl", data_dir() / "synthetic_cold" / "catalog.jsonl");
    auto fresh = generate_synthetic();
    EXPECT_EQ(sessions_to_jsonl(bundled), sessions_to_jsonl(fresh));
    EXPECT_EQ(bundled.catalog, fresh.catalog);
}
