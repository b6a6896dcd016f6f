#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qw {

// One sentence of a quest or biography passage. `source_id` names the
// passage (or quest section) that owns it; `index` is its 0-based position.
struct Statement {
    std::string source_id;
    int index = 0;
    std::string text;

    friend bool operator==(const Statement&, const Statement&) = default;
};

struct BiographyPassage {
    std::string entity_name;
    std::vector<Statement> statements;

    friend bool operator==(const BiographyPassage&, const BiographyPassage&) = default;
};

struct Objective {
    std::string name;
    std::vector<Statement> game_log;
    std::vector<Statement> walkthrough;

    friend bool operator==(const Objective&, const Objective&) = default;
};

struct QuestSpec {
    std::string quest_name;
    std::vector<Statement> synopsis;
    std::vector<Statement> synopsis_walkthrough;
    std::vector<Objective> objectives;

    friend bool operator==(const QuestSpec&, const QuestSpec&) = default;
};

struct Participant {
    std::string name;
    bool player = false;

    friend bool operator==(const Participant&, const Participant&) = default;
};

// The constraint side of one dialogue: quest statements (Q), biographies (B)
// and the participant list (P).
struct DialogueSpec {
    std::string quest_name;
    std::vector<Objective> in_objectives;
    std::vector<Objective> out_objectives;
    std::vector<BiographyPassage> bios;
    std::vector<Participant> participants;

    // Name of the first participant flagged as the player, if any.
    std::optional<std::string> player_name() const;
    std::vector<std::string> participant_names() const;
    std::vector<std::string> npc_names() const;
    bool is_participant(std::string_view name) const;
    bool is_player(std::string_view name) const;

    friend bool operator==(const DialogueSpec&, const DialogueSpec&) = default;
};

struct FactRef {
    std::string source_id;
    int index = 0;

    friend auto operator<=>(const FactRef&, const FactRef&) = default;
    friend bool operator==(const FactRef&, const FactRef&) = default;
};

enum class Origin { gold, generated_committed, generated_uncommitted };

const char* to_string(Origin origin) noexcept;
std::optional<Origin> origin_from_string(std::string_view s) noexcept;

struct UtteranceNode {
    std::string id;
    std::string speaker;
    std::string text;
    std::vector<FactRef> support_facts;
    Origin origin = Origin::gold;

    friend bool operator==(const UtteranceNode&, const UtteranceNode&) = default;
};

struct Edge {
    std::string from;
    std::string to;
    bool conditioned = false;

    friend bool operator==(const Edge&, const Edge&) = default;
};

// (from, to) pair identifying an edge.
using EdgeKey = std::pair<std::string, std::string>;

// Directed utterance graph. Cycles and multiple exits are allowed.
struct DialogueTree {
    std::map<std::string, UtteranceNode> nodes;
    std::vector<Edge> edges;
    std::string start_id;

    bool contains(std::string_view id) const { return nodes.find(std::string(id)) != nodes.end(); }
    const UtteranceNode& node(std::string_view id) const;
    bool has_edge(std::string_view from, std::string_view to) const;

    friend bool operator==(const DialogueTree&, const DialogueTree&) = default;
};

struct Dialogue {
    std::string id;
    DialogueSpec spec;
    DialogueTree tree;

    friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

enum class Split { train, dev, test };

const char* to_string(Split split) noexcept;
std::optional<Split> split_from_string(std::string_view s) noexcept;

struct Corpus {
    std::vector<QuestSpec> quests;
    std::vector<Dialogue> dialogues;
    std::optional<std::map<std::string, Split>> split_assignment;

    const QuestSpec* find_quest(std::string_view name) const;
    const Dialogue* find_dialogue(std::string_view id) const;

    friend bool operator==(const Corpus&, const Corpus&) = default;
};

// Compact index over a tree's adjacency. Node ids are sorted, and outgoing
// edges of each node are ordered by target id so that traversals visit
// children in lexicographic order.
class GraphIndex {
  public:
    struct OutEdge {
        std::size_t target;
        std::size_t edge;  // position in the edge list of this index
    };

    explicit GraphIndex(const DialogueTree& tree);

    std::size_t node_count() const { return ids_.size(); }
    std::size_t edge_count() const { return edge_source_.size(); }
    const std::string& id(std::size_t i) const { return ids_[i]; }
    std::optional<std::size_t> find(std::string_view id) const;
    const std::vector<OutEdge>& out(std::size_t i) const { return out_[i]; }
    std::size_t edge_source(std::size_t e) const { return edge_source_[e]; }
    std::size_t edge_target(std::size_t e) const { return edge_target_[e]; }

  private:
    std::vector<std::string> ids_;
    std::map<std::string, std::size_t, std::less<>> lookup_;
    std::vector<std::vector<OutEdge>> out_;
    std::vector<std::size_t> edge_source_;
    std::vector<std::size_t> edge_target_;
};

// ---------------------------------------------------------------------------
// Validation

enum class Severity { error, warning };

struct Finding {
    Severity severity = Severity::error;
    std::string kind;
    std::string subject;
    std::string message;
};

struct ValidationReport {
    std::vector<Finding> findings;

    bool ok() const;  // no error-severity findings
    std::size_t count(std::string_view kind) const;
    void append(const ValidationReport& other, std::string_view prefix = {});
};

// Checks the start node, edge endpoints, duplicate edges, reachability from
// start, empty texts and that every speaker is one of `participants`.
ValidationReport validate_tree(const DialogueTree& tree, const std::vector<std::string>& participants);

ValidationReport validate_spec(const DialogueSpec& spec);

// Whole-corpus validation: quests, specs, trees, fact references and split
// consistency.
ValidationReport validate_corpus(const Corpus& corpus);

// ---------------------------------------------------------------------------
// Facts

// Q statements in prompt order: in-objective logs and walkthroughs, then
// out-objective logs.
std::vector<const Statement*> quest_statements(const DialogueSpec& spec);
std::vector<const Statement*> bio_statements(const DialogueSpec& spec);

// Looks up (source_id, index) within Q ∪ B. Throws Error(not_found) for an
// unknown source and Error(out_of_range) for a bad index.
const Statement& resolve_fact(const DialogueSpec& spec, const FactRef& ref);

// Display label used in "<label> fact: ..." lines: the entity name for a
// biography sentence, the objective name for a quest sentence.
std::string fact_label(const DialogueSpec& spec, const FactRef& ref);

// ---------------------------------------------------------------------------
// Corpus utilities

// Keeps the start node, every unconditioned edge and the whitelisted
// conditioned edges, then prunes whatever is no longer reachable.
DialogueTree extract_quest_subgraph(const DialogueTree& raw, const std::set<EdgeKey>& keep_conditioned);

struct SplitCounts {
    std::size_t train = 0;
    std::size_t dev = 0;
    std::size_t test = 0;
};

Corpus split_by_quests(const Corpus& corpus, SplitCounts counts, std::uint64_t seed);

struct StatsReport {
    std::size_t dialogue_count = 0;
    std::size_t node_count = 0;
    std::size_t npc_node_count = 0;
    std::size_t annotated_node_count = 0;
    std::size_t annotated_npc_node_count = 0;
    std::size_t npc_fact_count = 0;
    std::size_t quest_statement_count = 0;
    std::size_t bio_statement_count = 0;

    // Absent when the denominator is zero.
    std::optional<double> annotated_fraction;
    std::optional<double> npc_annotated_fraction;
    std::optional<double> mean_facts_per_npc_node;
    std::optional<double> mean_quest_statements;
    std::optional<double> mean_bio_statements;
};

StatsReport corpus_stats(const Corpus& corpus);

}  // namespace qw
