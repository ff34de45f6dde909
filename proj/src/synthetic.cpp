#include "memrec/synthetic.hpp"

#include "memrec/io.hpp"

#include <array>
#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

namespace memrec {

namespace {

constexpr std::array<const char*, 4> kGenres{"comedy", "horror", "western", "musical"};
constexpr std::array<const char*, 6> kActors{"Marlow", "Okafor", "Lindqvist", "Tanaka", "Moreau", "Castellano"};
constexpr std::array<const char*, 6> kAdjectives{"Silver", "Crimson", "Hidden", "Broken", "Quiet", "Golden"};
constexpr std::array<const char*, 6> kNouns{"Harbor", "Valley", "Lantern", "Orchard", "Compass", "Meridian"};
constexpr std::size_t kGrid = kGenres.size() * kActors.size();
constexpr std::size_t kPairs = 6;

std::string item_id(std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "m%03zu", index + 1);
    return buf;
}

// Grid movies come first: index = actor * genres + genre.
std::size_t grid_index(std::size_t genre, std::size_t actor) { return actor * kGenres.size() + genre; }
std::size_t pair_first(std::size_t p) { return kGrid + 2 * p; }
std::size_t pair_second(std::size_t p) { return kGrid + 2 * p + 1; }

Catalog build_catalog() {
    Catalog catalog;
    for (std::size_t i = 0; i < kGrid + 2 * kPairs; ++i) {
        CatalogItem item;
        item.item_id = item_id(i);
        item.title = std::string("The ") + kAdjectives[i / kNouns.size()] + " " + kNouns[i % kNouns.size()];
        if (i < kGrid) {
            item.attrs["genre"] = kGenres[i % kGenres.size()];
            item.attrs["actor"] = kActors[i / kGenres.size()];
        } else {
            item.attrs["genre"] = "documentary";
        }
        catalog.add(std::move(item));
    }
    return catalog;
}

Utterance turn(Speaker who, std::string text) {
    Utterance u;
    u.speaker = who;
    u.text = std::move(text);
    return u;
}

SessionTime at(std::size_t user, std::size_t session) {
    using namespace std::chrono;
    const sys_days base = year{2024} / January / 1;
    return time_point_cast<milliseconds>(base + days{7 * session} + hours{10} + minutes{static_cast<int>(user)});
}

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

Corpus generate_synthetic(const SyntheticOptions& options) {
    Corpus corpus;
    corpus.catalog = build_catalog();
    const auto& cat = corpus.catalog;
    std::mt19937_64 rng(options.seed);
    auto title = [&](std::size_t index) { return cat.title_of(item_id(index)); };

    static const std::array<const char*, 3> small_talk{
        "Great, thank you for the help.", "Perfect, that sounds like a plan.", "Thanks a lot, talk to you soon."};

    for (std::size_t i = 0; i < options.warm_users; ++i) {
        char uid[16];
        std::snprintf(uid, sizeof uid, "u%02zu", i + 1);
        UserRecord user{uid, {}};
        const std::size_t g = i % kGenres.size();
        const std::size_t a = (i / kGenres.size()) % kActors.size();
        const std::size_t d = (g + 2) % kGenres.size();
        const std::size_t p = i % kPairs;
        const std::string genre = kGenres[g], actor = kActors[a], disliked = kGenres[d];

        std::size_t other_actor = (a + 1 + pick(rng, kActors.size() - 1)) % kActors.size();
        std::vector<std::size_t> neutral;
        for (std::size_t k = 0; k < kGenres.size(); ++k) {
            if (k != g && k != d) neutral.push_back(k);
        }
        const std::size_t other_genre = neutral[pick(rng, neutral.size())];

        auto session = [&](std::size_t n) {
            DialogueSession s;
            s.session_id = std::string(uid) + "-s" + std::to_string(n);
            s.user_id = uid;
            s.session_time = at(i, n);
            return s;
        };

        DialogueSession s1 = session(1);
        {
            auto u1 = turn(Speaker::User, "Hello there, I would like to watch a " + genre + " movie this evening because " + genre +
                                              " is my favourite kind of story.");
            u1.annotations = {{genre, "loves " + genre + " movies"}};
            const std::size_t seen = grid_index(g, other_actor);
            auto s2 = turn(Speaker::System, "Of course. One option is " + title(seen) + ". Would that work for you?");
            s2.mentioned_items = {item_id(seen)};
            auto u3 = turn(Speaker::User, "I saw that one already, but honestly " + actor + " is the actor I admire the most.");
            u3.annotations = {{actor, "admires " + actor}};
            const std::size_t rec = grid_index(other_genre, a);
            auto s4 = turn(Speaker::System, "Then you may like " + title(rec) + ", which stars " + actor + ".");
            s4.mentioned_items = {item_id(rec)};
            s4.ground_truth_items = {item_id(rec)};
            auto u5 = turn(Speaker::User, "Thanks, I will add it to my list. I always eat popcorn while watching.");
            u5.annotations = {{"popcorn", "always eats popcorn"}};
            s1.utterances = {u1, s2, u3, s4, u5};
        }

        DialogueSession s2 = session(2);
        {
            auto u1 = turn(Speaker::User, "I am not a fan of " + disliked + " at all, " + disliked + " movies make me uncomfortable.");
            u1.annotations = {{disliked, "dislikes " + disliked + " movies"}};
            auto t2 = turn(Speaker::System, "Noted. Do you prefer subtitles or dubbed versions?");
            auto u3 = turn(Speaker::User, "Subtitles are fine, but I dislike long runtimes.");
            u3.annotations = {{"subtitles", "fine with subtitles"}, {"long runtimes", "dislikes long runtimes"}};
            auto u4 = turn(Speaker::User, "Last month I watched " + title(pair_first(p)) + " with my family.");
            u4.mentioned_items = {item_id(pair_first(p))};
            auto s5 = turn(Speaker::System, "People who liked that one also enjoyed " + title(pair_second(p)) + ".");
            s5.mentioned_items = {item_id(pair_second(p))};
            s5.ground_truth_items = {item_id(pair_second(p))};
            auto u6 = turn(Speaker::User, small_talk[pick(rng, small_talk.size())]);
            s2.utterances = {u1, t2, u3, u4, s5, u6};
        }

        DialogueSession s3 = session(3);
        {
            auto u1 = turn(Speaker::User, "Any suggestions for the weekend? Something light would be nice.");
            const std::size_t rec = grid_index(g, (a + 1 + pick(rng, kActors.size() - 1)) % kActors.size());
            auto s2 = turn(Speaker::System, "Maybe " + title(rec) + ".");
            s2.mentioned_items = {item_id(rec)};
            s2.ground_truth_items = {item_id(rec)};
            s3.utterances = {u1, s2};
        }

        DialogueSession s4 = session(4);
        {
            auto u1 = turn(Speaker::User, "Good evening, could you suggest a " + genre + " film starring " + actor + " please?");
            const std::size_t target = grid_index(g, a);
            auto s2 = turn(Speaker::System, "You could watch " + title(target) + ".");
            s2.mentioned_items = {item_id(target)};
            s2.ground_truth_items = {item_id(target)};
            s2.relevant_entities = {genre, actor};
            s4.utterances = {u1, s2};
        }

        user.sessions = {s1, s2, s3, s4};
        corpus.users.emplace(uid, std::move(user));
    }

    for (std::size_t c = 0; c < options.cold_users; ++c) {
        char uid[16];
        std::snprintf(uid, sizeof uid, "c%02zu", c + 1);
        const std::size_t p = c % kPairs;
        DialogueSession s;
        s.session_id = std::string(uid) + "-s1";
        s.user_id = uid;
        s.session_time = at(options.warm_users + c, 5);
        auto u1 = turn(Speaker::User, "I just watched " + title(pair_first(p)) + " and loved it. What should I see next?");
        u1.mentioned_items = {item_id(pair_first(p))};
        auto s2 = turn(Speaker::System, "Try " + title(pair_second(p)) + ".");
        s2.mentioned_items = {item_id(pair_second(p))};
        s2.ground_truth_items = {item_id(pair_second(p))};
        s.utterances = {u1, s2};
        corpus.users.emplace(uid, UserRecord{uid, {s}});
    }

    for (auto& [_, user] : corpus.users) {
        for (auto& s : user.sessions) {
            int k = 1;
            for (auto& u : s.utterances) u.turn_index = k++;
            corpus.split_assignment[s.session_id] = Split::Train;
        }
    }
    return corpus;
}

void write_synthetic(const SyntheticOptions& options, const std::filesystem::path& dir) {
    auto corpus = generate_synthetic(options);
    write_text_file_atomic(dir / "sessions.jsonl", sessions_to_jsonl(corpus));
    write_text_file_atomic(dir / "catalog.jsonl", catalog_to_jsonl(corpus.catalog));
}

}  // namespace memrec
