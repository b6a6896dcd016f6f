#include "qw/model.hpp"

#include <algorithm>
#include <deque>
#include <numeric>

#include "qw/error.hpp"
#include "qw/rng.hpp"
#include "qw/text.hpp"

namespace qw {

const char* to_string(ErrorCode code) noexcept {
    switch (code) {
        case ErrorCode::invalid_argument: return "invalid_argument";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::out_of_range: return "out_of_range";
        case ErrorCode::unreachable: return "unreachable";
        case ErrorCode::parse_error: return "parse_error";
        case ErrorCode::overflow: return "overflow";
        case ErrorCode::backend_failure: return "backend_failure";
        case ErrorCode::conflict: return "conflict";
    }
    return "unknown";
}

std::optional<std::string> DialogueSpec::player_name() const {
    for (const auto& p : participants)
        if (p.player) return p.name;
    return std::nullopt;
}

std::vector<std::string> DialogueSpec::participant_names() const {
    std::vector<std::string> out;
    out.reserve(participants.size());
    for (const auto& p : participants) out.push_back(p.name);
    return out;
}

std::vector<std::string> DialogueSpec::npc_names() const {
    std::vector<std::string> out;
    for (const auto& p : participants)
        if (!p.player) out.push_back(p.name);
    return out;
}

bool DialogueSpec::is_participant(std::string_view name) const {
    return std::any_of(participants.begin(), participants.end(),
                       [&](const Participant& p) { return p.name == name; });
}

bool DialogueSpec::is_player(std::string_view name) const {
    return std::any_of(participants.begin(), participants.end(),
                       [&](const Participant& p) { return p.player && p.name == name; });
}

const char* to_string(Origin origin) noexcept {
    switch (origin) {
        case Origin::gold: return "gold";
        case Origin::generated_committed: return "generated-committed";
        case Origin::generated_uncommitted: return "generated-uncommitted";
    }
    return "gold";
}

std::optional<Origin> origin_from_string(std::string_view s) noexcept {
    if (s == "gold") return Origin::gold;
    if (s == "generated-committed") return Origin::generated_committed;
    if (s == "generated-uncommitted") return Origin::generated_uncommitted;
    return std::nullopt;
}

const char* to_string(Split split) noexcept {
    switch (split) {
        case Split::train: return "train";
        case Split::dev: return "dev";
        case Split::test: return "test";
    }
    return "train";
}

std::optional<Split> split_from_string(std::string_view s) noexcept {
    if (s == "train") return Split::train;
    if (s == "dev") return Split::dev;
    if (s == "test") return Split::test;
    return std::nullopt;
}

const UtteranceNode& DialogueTree::node(std::string_view id) const {
    auto it = nodes.find(std::string(id));
    if (it == nodes.end()) throw Error(ErrorCode::not_found, "unknown node id '" + std::string(id) + "'");
    return it->second;
}

bool DialogueTree::has_edge(std::string_view from, std::string_view to) const {
    return std::any_of(edges.begin(), edges.end(), [&](const Edge& e) { return e.from == from && e.to == to; });
}

const QuestSpec* Corpus::find_quest(std::string_view name) const {
    for (const auto& q : quests)
        if (q.quest_name == name) return &q;
    return nullptr;
}

const Dialogue* Corpus::find_dialogue(std::string_view id) const {
    for (const auto& d : dialogues)
        if (d.id == id) return &d;
    return nullptr;
}

GraphIndex::GraphIndex(const DialogueTree& tree) {
    ids_.reserve(tree.nodes.size());
    for (const auto& [id, node] : tree.nodes) {
        lookup_.emplace(id, ids_.size());
        ids_.push_back(id);
    }
    out_.resize(ids_.size());
    for (const auto& e : tree.edges) {
        auto from = find(e.from);
        auto to = find(e.to);
        if (!from || !to) continue;
        // parallel edges collapse into one
        bool seen = std::any_of(out_[*from].begin(), out_[*from].end(),
                                [&](const OutEdge& o) { return o.target == *to; });
        if (seen) continue;
        out_[*from].push_back({*to, edge_source_.size()});
        edge_source_.push_back(*from);
        edge_target_.push_back(*to);
    }
    // ids_ is sorted, so ordering by index is ordering by id
    for (auto& list : out_)
        std::sort(list.begin(), list.end(), [](const OutEdge& a, const OutEdge& b) { return a.target < b.target; });
}

std::optional<std::size_t> GraphIndex::find(std::string_view id) const {
    auto it = lookup_.find(id);
    if (it == lookup_.end()) return std::nullopt;
    return it->second;
}

bool ValidationReport::ok() const {
    return std::none_of(findings.begin(), findings.end(),
                        [](const Finding& f) { return f.severity == Severity::error; });
}

std::size_t ValidationReport::count(std::string_view kind) const {
    return static_cast<std::size_t>(
        std::count_if(findings.begin(), findings.end(), [&](const Finding& f) { return f.kind == kind; }));
}

void ValidationReport::append(const ValidationReport& other, std::string_view prefix) {
    for (auto f : other.findings) {
        if (!prefix.empty()) f.subject = std::string(prefix) + f.subject;
        findings.push_back(std::move(f));
    }
}

namespace {

void add(ValidationReport& r, Severity sev, std::string kind, std::string subject, std::string message) {
    r.findings.push_back({sev, std::move(kind), std::move(subject), std::move(message)});
}

// Checks the statement-level invariants and records which (source, index)
// pairs appear so contiguity can be verified after all lists are seen.
class StatementChecker {
  public:
    explicit StatementChecker(ValidationReport& report) : report_(report) {}

    void check(const std::vector<Statement>& list, const std::string& where) {
        for (const auto& s : list) {
            if (text::trim(s.text).empty())
                add(report_, Severity::error, "empty statement", where, "statement text is empty");
            if (s.source_id.empty())
                add(report_, Severity::error, "statement source", where, "statement has no source id");
            if (s.index < 0) {
                add(report_, Severity::error, "statement index", where, "negative statement index");
                continue;
            }
            auto& seen = indices_[s.source_id];
            if (!seen.insert(s.index).second)
                add(report_, Severity::error, "statement index", s.source_id,
                    "duplicate index " + std::to_string(s.index));
        }
    }

    void finish() {
        for (const auto& [source, seen] : indices_) {
            int expected = 0;
            for (int i : seen) {
                if (i != expected) {
                    add(report_, Severity::error, "statement index", source,
                        "indices are not contiguous from 0 (missing " + std::to_string(expected) + ")");
                    break;
                }
                ++expected;
            }
        }
    }

  private:
    ValidationReport& report_;
    std::map<std::string, std::set<int>> indices_;
};

std::vector<std::size_t> reachable_from(const GraphIndex& g, std::size_t start) {
    std::vector<char> seen(g.node_count(), 0);
    std::vector<std::size_t> order;
    std::deque<std::size_t> queue{start};
    seen[start] = 1;
    while (!queue.empty()) {
        auto u = queue.front();
        queue.pop_front();
        order.push_back(u);
        for (const auto& o : g.out(u)) {
            if (!seen[o.target]) {
                seen[o.target] = 1;
                queue.push_back(o.target);
            }
        }
    }
    return order;
}

}  // namespace

ValidationReport validate_tree(const DialogueTree& tree, const std::vector<std::string>& participants) {
    ValidationReport r;
    const bool has_start = tree.contains(tree.start_id);
    if (!has_start) add(r, Severity::error, "missing start", tree.start_id, "start node is not in the tree");

    for (const auto& [key, node] : tree.nodes) {
        if (node.id != key) add(r, Severity::error, "id mismatch", key, "node keyed by a different id");
        if (std::find(participants.begin(), participants.end(), node.speaker) == participants.end())
            add(r, Severity::error, "unknown speaker", key, "speaker '" + node.speaker + "' is not a participant");
        if (text::trim(node.text).empty()) add(r, Severity::error, "empty text", key, "utterance text is empty");
    }

    std::set<EdgeKey> seen_edges;
    for (const auto& e : tree.edges) {
        const std::string subject = e.from + "->" + e.to;
        if (!tree.contains(e.from) || !tree.contains(e.to))
            add(r, Severity::error, "dangling edge", subject, "edge endpoint is not in the tree");
        if (!seen_edges.insert({e.from, e.to}).second)
            add(r, Severity::error, "duplicate edge", subject, "edge listed more than once");
    }

    if (has_start) {
        GraphIndex g(tree);
        auto order = reachable_from(g, *g.find(tree.start_id));
        std::vector<char> seen(g.node_count(), 0);
        for (auto i : order) seen[i] = 1;
        for (std::size_t i = 0; i < g.node_count(); ++i)
            if (!seen[i]) add(r, Severity::error, "unreachable", g.id(i), "node is unreachable from start");
    }
    return r;
}

ValidationReport validate_spec(const DialogueSpec& spec) {
    ValidationReport r;
    std::size_t players = 0;
    std::set<std::string> names;
    for (const auto& p : spec.participants) {
        if (p.player) ++players;
        if (text::trim(p.name).empty()) add(r, Severity::error, "empty participant", "", "participant name is empty");
        if (!names.insert(p.name).second)
            add(r, Severity::error, "duplicate participant", p.name, "participant listed twice");
    }
    if (players != 1)
        add(r, Severity::error, "player count", spec.quest_name,
            "expected exactly one player participant, found " + std::to_string(players));

    std::set<std::string> entities;
    for (const auto& b : spec.bios) {
        if (!entities.insert(b.entity_name).second)
            add(r, Severity::error, "duplicate entity", b.entity_name, "biography entity listed twice");
        if (b.statements.empty())
            add(r, Severity::error, "empty biography", b.entity_name, "biography has no statements");
    }
    for (const auto& p : spec.participants)
        if (!p.player && !entities.count(p.name))
            add(r, Severity::warning, "missing biography", p.name, "NPC participant has no biography passage");

    for (const auto& o : spec.in_objectives)
        if (text::trim(o.name).empty()) add(r, Severity::error, "empty objective name", "", "objective has no name");
    for (const auto& o : spec.out_objectives) {
        if (text::trim(o.name).empty()) add(r, Severity::error, "empty objective name", "", "objective has no name");
        if (!o.walkthrough.empty())
            add(r, Severity::error, "out-objective walkthrough", o.name,
                "out-objectives carry game logs only");
    }

    StatementChecker checker(r);
    for (const auto& o : spec.in_objectives) {
        checker.check(o.game_log, o.name);
        checker.check(o.walkthrough, o.name);
    }
    for (const auto& o : spec.out_objectives) checker.check(o.game_log, o.name);
    for (const auto& b : spec.bios) checker.check(b.statements, b.entity_name);
    checker.finish();
    return r;
}

ValidationReport validate_corpus(const Corpus& corpus) {
    ValidationReport r;
    std::set<std::string> quest_names;
    for (const auto& q : corpus.quests) {
        if (!quest_names.insert(q.quest_name).second)
            add(r, Severity::error, "duplicate quest", q.quest_name, "quest name used twice");
        ValidationReport qr;
        StatementChecker checker(qr);
        checker.check(q.synopsis, "synopsis");
        checker.check(q.synopsis_walkthrough, "synopsis walkthrough");
        for (const auto& o : q.objectives) {
            checker.check(o.game_log, o.name);
            checker.check(o.walkthrough, o.name);
        }
        checker.finish();
        r.append(qr, q.quest_name + ": ");
    }

    std::set<std::string> dialogue_ids;
    for (const auto& d : corpus.dialogues) {
        const std::string prefix = d.id + ": ";
        if (!dialogue_ids.insert(d.id).second)
            add(r, Severity::error, "duplicate dialogue", d.id, "dialogue id used twice");
        if (!quest_names.count(d.spec.quest_name))
            add(r, Severity::error, "unknown quest", d.id, "quest '" + d.spec.quest_name + "' is not in the corpus");
        r.append(validate_spec(d.spec), prefix);
        r.append(validate_tree(d.tree, d.spec.participant_names()), prefix);
        for (const auto& [id, node] : d.tree.nodes) {
            for (const auto& f : node.support_facts) {
                try {
                    resolve_fact(d.spec, f);
                } catch (const Error& e) {
                    add(r, Severity::error, "unresolvable fact", prefix + id, e.what());
                }
            }
        }
    }

    if (corpus.split_assignment) {
        for (const auto& q : corpus.quests)
            if (!corpus.split_assignment->count(q.quest_name))
                add(r, Severity::error, "missing split", q.quest_name, "quest has no split assignment");
        for (const auto& [name, split] : *corpus.split_assignment)
            if (!quest_names.count(name))
                add(r, Severity::error, "unknown quest", name, "split assigned to an unknown quest");
    }
    return r;
}

std::vector<const Statement*> quest_statements(const DialogueSpec& spec) {
    std::vector<const Statement*> out;
    for (const auto& o : spec.in_objectives) {
        for (const auto& s : o.game_log) out.push_back(&s);
        for (const auto& s : o.walkthrough) out.push_back(&s);
    }
    for (const auto& o : spec.out_objectives)
        for (const auto& s : o.game_log) out.push_back(&s);
    return out;
}

std::vector<const Statement*> bio_statements(const DialogueSpec& spec) {
    std::vector<const Statement*> out;
    for (const auto& b : spec.bios)
        for (const auto& s : b.statements) out.push_back(&s);
    return out;
}

namespace {

struct Located {
    const Statement* statement = nullptr;
    std::string label;
};

Located locate(const DialogueSpec& spec, const FactRef& ref) {
    bool source_seen = false;
    auto scan = [&](const std::vector<Statement>& list) -> const Statement* {
        for (const auto& s : list) {
            if (s.source_id != ref.source_id) continue;
            source_seen = true;
            if (s.index == ref.index) return &s;
        }
        return nullptr;
    };
    for (const auto& o : spec.in_objectives) {
        if (auto s = scan(o.game_log)) return {s, o.name};
        if (auto s = scan(o.walkthrough)) return {s, o.name};
    }
    for (const auto& o : spec.out_objectives)
        if (auto s = scan(o.game_log)) return {s, o.name};
    for (const auto& b : spec.bios)
        if (auto s = scan(b.statements)) return {s, b.entity_name};
    if (!source_seen) throw Error(ErrorCode::not_found, "unknown source_id '" + ref.source_id + "'");
    throw Error(ErrorCode::out_of_range,
                "index out of range: " + ref.source_id + "[" + std::to_string(ref.index) + "]");
}

}  // namespace

const Statement& resolve_fact(const DialogueSpec& spec, const FactRef& ref) { return *locate(spec, ref).statement; }

std::string fact_label(const DialogueSpec& spec, const FactRef& ref) { return locate(spec, ref).label; }

DialogueTree extract_quest_subgraph(const DialogueTree& raw, const std::set<EdgeKey>& keep_conditioned) {
    if (!raw.contains(raw.start_id))
        throw Error(ErrorCode::not_found, "missing start node '" + raw.start_id + "'");

    std::vector<Edge> kept;
    for (const auto& e : raw.edges) {
        if (!raw.contains(e.from) || !raw.contains(e.to)) continue;
        if (!e.conditioned || keep_conditioned.count({e.from, e.to})) kept.push_back(e);
    }

    std::map<std::string, std::vector<std::string>> adjacency;
    for (const auto& e : kept) adjacency[e.from].push_back(e.to);
    std::set<std::string> reached{raw.start_id};
    std::deque<std::string> queue{raw.start_id};
    while (!queue.empty()) {
        auto u = queue.front();
        queue.pop_front();
        for (const auto& v : adjacency[u])
            if (reached.insert(v).second) queue.push_back(v);
    }

    DialogueTree out;
    out.start_id = raw.start_id;
    for (const auto& id : reached) out.nodes.emplace(id, raw.nodes.at(id));
    for (const auto& e : kept)
        if (reached.count(e.from)) out.edges.push_back(e);
    return out;
}

Corpus split_by_quests(const Corpus& corpus, SplitCounts counts, std::uint64_t seed) {
    const std::size_t n = corpus.quests.size();
    if (counts.train + counts.dev + counts.test != n)
        throw Error(ErrorCode::invalid_argument,
                    "split counts sum to " + std::to_string(counts.train + counts.dev + counts.test) +
                        " but the corpus has " + std::to_string(n) + " quests");

    std::vector<std::string> names;
    names.reserve(n);
    for (const auto& q : corpus.quests) names.push_back(q.quest_name);
    // Sorting first makes the assignment independent of corpus order.
    std::sort(names.begin(), names.end());
    Rng rng(seed);
    for (std::size_t i = n; i > 1; --i) std::swap(names[i - 1], names[rng.index(i)]);

    std::map<std::string, Split> assignment;
    for (std::size_t i = 0; i < n; ++i) {
        Split s = i < counts.train ? Split::train : i < counts.train + counts.dev ? Split::dev : Split::test;
        assignment[names[i]] = s;
    }
    Corpus out = corpus;
    out.split_assignment = std::move(assignment);
    return out;
}

StatsReport corpus_stats(const Corpus& corpus) {
    StatsReport s;
    s.dialogue_count = corpus.dialogues.size();
    for (const auto& d : corpus.dialogues) {
        for (const auto& [id, node] : d.tree.nodes) {
            ++s.node_count;
            const bool annotated = !node.support_facts.empty();
            if (annotated) ++s.annotated_node_count;
            if (!d.spec.is_player(node.speaker)) {
                ++s.npc_node_count;
                s.npc_fact_count += node.support_facts.size();
                if (annotated) ++s.annotated_npc_node_count;
            }
        }
        s.quest_statement_count += quest_statements(d.spec).size();
        s.bio_statement_count += bio_statements(d.spec).size();
    }
    auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
        if (den == 0) return std::nullopt;
        return static_cast<double>(num) / static_cast<double>(den);
    };
    s.annotated_fraction = ratio(s.annotated_node_count, s.node_count);
    s.npc_annotated_fraction = ratio(s.annotated_npc_node_count, s.npc_node_count);
    s.mean_facts_per_npc_node = ratio(s.npc_fact_count, s.npc_node_count);
    s.mean_quest_statements = ratio(s.quest_statement_count, s.dialogue_count);
    s.mean_bio_statements = ratio(s.bio_statement_count, s.dialogue_count);
    return s;
}

}  // namespace qw
