#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "qw/model.hpp"

// Seeded fixture generators used by tests, the acceptance suite and the CLI
// demo commands. Output depends only on the arguments.
namespace qw::synthetic {

// Random directed graph with ids n0..n{k-1}, start n0, at most max_edges
// distinct (from, to) pairs. Self loops and cycles occur; some nodes may be
// unreachable. Speakers alternate between "Player" and "Guide".
DialogueTree random_graph(std::uint64_t seed, std::size_t max_nodes, std::size_t max_edges);

// Spec with a player, one or two NPCs, biographies for the NPCs and one
// location, one or two in-objectives and one out-objective.
DialogueSpec random_spec(std::uint64_t seed, const std::string& quest_name);

// Quest record matching a spec's objectives.
QuestSpec quest_for(const DialogueSpec& spec);

// Gold dialogue over `spec`: mostly a tree with a few extra edges (including
// cycles), alternating speakers, NPC lines annotated with support facts whose
// sentences they paraphrase.
Dialogue random_dialogue(std::uint64_t seed, const std::string& id, const DialogueSpec& spec,
                         std::size_t min_nodes = 4, std::size_t max_nodes = 9);

// `quests` quests named "quest-001".. with `dialogues_per_quest` dialogues
// each. Passes validate_corpus.
Corpus corpus(std::uint64_t seed, std::size_t quests, std::size_t dialogues_per_quest = 1);

}  // namespace qw::synthetic
