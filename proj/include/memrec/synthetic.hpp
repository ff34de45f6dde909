#pragma once

#include "memrec/dialogue.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>

namespace memrec {

// Movie-domain corpus with planted structure:
//  - every warm user likes one genre and one actor, dislikes another genre
//    and carries a few unrelated preferences; their Test turn asks for a
//    film of that genre with that actor, and the relevant entities are
//    exactly those two;
//  - pairs of "follow-up" items co-occur across warm users' Train
//    sessions; each cold user (one session only) mentions the first item
//    of a pair and the ground truth is the second.
// Utterances carry the annotations the mock extractor replays.
struct SyntheticOptions {
    std::size_t warm_users = 24;
    std::size_t cold_users = 6;
    std::uint64_t seed = 7;
};

// Unsplit corpus (every session Train) with its catalog.
Corpus generate_synthetic(const SyntheticOptions& options = {});

// Writes sessions.jsonl and catalog.jsonl into `dir`.
void write_synthetic(const SyntheticOptions& options, const std::filesystem::path& dir);

}  // namespace memrec
