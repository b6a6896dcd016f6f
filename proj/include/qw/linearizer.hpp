#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "qw/model.hpp"

namespace qw {

inline constexpr std::size_t default_search_budget = 100'000;
inline constexpr std::size_t exact_sampling_limit = 10'000;

// Start-to-node utterance path that never repeats an edge.
struct History {
    std::vector<std::string> ids;
    // Set when the exact search ran out of expansions; `ids` is then the best
    // path found by search or by the greedy fallback.
    bool budget_truncated = false;

    std::size_t edge_count() const { return ids.empty() ? 0 : ids.size() - 1; }
    friend bool operator==(const History&, const History&) = default;
};

// Longest edge-simple path from the start node to `target`. Among paths of
// maximal length the lexicographically smallest id sequence wins.
// Throws Error(unreachable) when target cannot be reached from start.
History linearize(const DialogueTree& tree, const std::string& target,
                  std::size_t search_budget = default_search_budget);

// The linearization covering the most distinct nodes over every possible
// end node (ties: more edges, then lexicographic order). Used to turn whole
// gold dialogues into few-shot exemplars.
History linearize_full(const DialogueTree& tree, std::size_t search_budget = default_search_budget);

struct PathEnumeration {
    std::vector<std::vector<std::string>> paths;
    bool truncated = false;  // more than `cap` paths exist
};

// Every start->target path that repeats no edge, in lexicographic order.
PathEnumeration all_edge_simple_paths(const DialogueTree& tree, const std::string& target, std::size_t cap);

// Uniform draw over the edge-simple paths to target. Exact when at most
// exact_sampling_limit paths exist, otherwise a seeded random walk that only
// takes steps from which target stays reachable.
History sample_path(const DialogueTree& tree, const std::string& target, std::uint64_t seed);

// Path checker: start anchor, adjacency and edge uniqueness.
bool is_valid_history(const DialogueTree& tree, const std::vector<std::string>& ids, std::string* why = nullptr);

// Breadth-first order from start, children visited by id.
std::vector<std::string> canonical_order(const DialogueTree& tree);

// Nodes in `keep` plus every edge between them; start is kept as is.
DialogueTree induced_subtree(const DialogueTree& tree, const std::set<std::string>& keep);

// One next-utterance generation instance.
struct GenerationTask {
    std::string item_id;
    std::string dialogue_id;
    DialogueSpec spec;
    DialogueTree subtree;
    std::string most_recent;
    History history;
    std::optional<UtteranceNode> gold_target;
    std::optional<std::vector<FactRef>> gold_facts;

    std::vector<UtteranceNode> history_nodes() const;
};

// Next-utterance items for every non-start node in canonical order. Each
// item's subtree is the prefix of nodes before the target; its most recent
// node is the target's breadth-first parent. Variant 0 uses the exact
// linearization, further variants sample random paths (not deduplicated).
std::vector<GenerationTask> build_nup_items(const DialogueTree& tree, const DialogueSpec& spec,
                                            std::size_t variants_per_node, std::uint64_t seed,
                                            const std::string& dialogue_id = {});

}  // namespace qw
