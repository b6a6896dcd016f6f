#include "qw/linearizer.hpp"

#include <algorithm>
#include <deque>
#include <map>

#include "qw/error.hpp"
#include "qw/rng.hpp"

namespace qw {

namespace {

using Path = std::vector<std::size_t>;

// Shared search state over a GraphIndex: which edges the current path uses.
class EdgeWalk {
  public:
    explicit EdgeWalk(const GraphIndex& g) : g_(g), used_(g.edge_count(), 0), mark_(g.node_count(), 0) {}

    const GraphIndex& graph() const { return g_; }
    bool used(std::size_t e) const { return used_[e] != 0; }
    void use(std::size_t e) { used_[e] = 1; }
    void release(std::size_t e) { used_[e] = 0; }

    // Number of unused edges whose source is reachable from `from` over
    // unused edges, and whether `target` is among the reachable nodes.
    std::pair<std::size_t, bool> reach(std::size_t from, std::size_t target) {
        ++epoch_;
        stack_.clear();
        stack_.push_back(from);
        mark_[from] = epoch_;
        std::size_t edges = 0;
        bool found = from == target;
        while (!stack_.empty()) {
            auto u = stack_.back();
            stack_.pop_back();
            for (const auto& o : g_.out(u)) {
                if (used_[o.edge]) continue;
                ++edges;
                if (mark_[o.target] != epoch_) {
                    mark_[o.target] = epoch_;
                    if (o.target == target) found = true;
                    stack_.push_back(o.target);
                }
            }
        }
        return {edges, found};
    }

    bool can_reach(std::size_t from, std::size_t target) { return reach(from, target).second; }

  private:
    const GraphIndex& g_;
    std::vector<char> used_;
    std::vector<std::size_t> mark_;
    std::size_t epoch_ = 0;
    std::vector<std::size_t> stack_;
};

std::vector<std::string> to_ids(const GraphIndex& g, const Path& p) {
    std::vector<std::string> out;
    out.reserve(p.size());
    for (auto i : p) out.push_back(g.id(i));
    return out;
}

// True when a is a better linearization than b: longer, or equally long and
// lexicographically smaller by id.
bool better(const GraphIndex& g, const Path& a, const Path& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(),
                                        [&](std::size_t x, std::size_t y) { return g.id(x) < g.id(y); });
}

struct Endpoints {
    std::size_t start;
    std::size_t target;
};

Endpoints endpoints(const DialogueTree& tree, const GraphIndex& g, const std::string& target) {
    auto s = g.find(tree.start_id);
    if (!s) throw Error(ErrorCode::not_found, "missing start node '" + tree.start_id + "'");
    auto t = g.find(target);
    if (!t) throw Error(ErrorCode::not_found, "unknown target node '" + target + "'");
    return {*s, *t};
}

// Depth-first branch and bound. Children are explored in id order, so the
// first path found at any length is the lexicographically smallest of that
// length; a subtree is pruned unless it could beat the incumbent strictly.
class LongestPathSearch {
  public:
    LongestPathSearch(const GraphIndex& g, std::size_t target, std::size_t budget)
        : walk_(g), target_(target), budget_(budget) {}

    void run(std::size_t start) {
        path_.assign(1, start);
        visit(start);
    }

    const Path& best() const { return best_; }
    bool exhausted() const { return exhausted_; }

  private:
    void visit(std::size_t u) {
        if (u == target_ && (best_.empty() || path_.size() > best_.size())) best_ = path_;
        auto [reachable_edges, target_reachable] = walk_.reach(u, target_);
        if (!target_reachable) return;
        if (!best_.empty() && path_.size() - 1 + reachable_edges <= best_.size() - 1) return;
        for (const auto& o : walk_.graph().out(u)) {
            if (walk_.used(o.edge)) continue;
            if (expansions_ >= budget_) {
                exhausted_ = true;
                return;
            }
            ++expansions_;
            walk_.use(o.edge);
            path_.push_back(o.target);
            visit(o.target);
            path_.pop_back();
            walk_.release(o.edge);
            if (exhausted_) return;
        }
    }

    EdgeWalk walk_;
    std::size_t target_;
    std::size_t budget_;
    std::size_t expansions_ = 0;
    bool exhausted_ = false;
    Path path_;
    Path best_;
};

// Greedy longest-extension walk: always step along the unused edge that
// leaves the most unused edges reachable while target stays reachable, and
// keep the longest prefix that ends at target.
Path greedy_extension(const GraphIndex& g, std::size_t start, std::size_t target) {
    EdgeWalk walk(g);
    Path path{start};
    Path best;
    if (start == target) best = path;
    std::size_t u = start;
    while (true) {
        std::optional<GraphIndex::OutEdge> choice;
        std::size_t choice_reach = 0;
        for (const auto& o : g.out(u)) {
            if (walk.used(o.edge)) continue;
            walk.use(o.edge);
            auto [edges, ok] = walk.reach(o.target, target);
            walk.release(o.edge);
            if (!ok) continue;
            if (!choice || edges > choice_reach) {
                choice = o;
                choice_reach = edges;
            }
        }
        if (!choice) break;
        walk.use(choice->edge);
        u = choice->target;
        path.push_back(u);
        if (u == target) best = path;
    }
    return best;
}

}  // namespace

History linearize(const DialogueTree& tree, const std::string& target, std::size_t search_budget) {
    GraphIndex g(tree);
    auto [start, goal] = endpoints(tree, g, target);
    {
        EdgeWalk walk(g);
        if (!walk.can_reach(start, goal))
            throw Error(ErrorCode::unreachable, "target '" + target + "' is unreachable from start");
    }

    LongestPathSearch search(g, goal, search_budget);
    search.run(start);
    History h;
    Path best = search.best();
    if (search.exhausted()) {
        h.budget_truncated = true;
        Path greedy = greedy_extension(g, start, goal);
        if (best.empty() || better(g, greedy, best)) best = std::move(greedy);
    }
    h.ids = to_ids(g, best);
    return h;
}

History linearize_full(const DialogueTree& tree, std::size_t search_budget) {
    if (!tree.contains(tree.start_id)) throw Error(ErrorCode::not_found, "missing start node '" + tree.start_id + "'");
    GraphIndex g(tree);
    EdgeWalk walk(g);
    const auto start = *g.find(tree.start_id);

    History best;
    std::size_t best_distinct = 0;
    for (std::size_t t = 0; t < g.node_count(); ++t) {
        if (!walk.can_reach(start, t)) continue;
        History h = linearize(tree, g.id(t), search_budget);
        std::set<std::string> distinct(h.ids.begin(), h.ids.end());
        bool take = best.ids.empty() || distinct.size() > best_distinct ||
                    (distinct.size() == best_distinct &&
                     (h.ids.size() > best.ids.size() || (h.ids.size() == best.ids.size() && h.ids < best.ids)));
        if (take) {
            best_distinct = distinct.size();
            bool truncated = best.budget_truncated || h.budget_truncated;
            best = std::move(h);
            best.budget_truncated = truncated;
        } else if (h.budget_truncated) {
            best.budget_truncated = true;
        }
    }
    return best;
}

PathEnumeration all_edge_simple_paths(const DialogueTree& tree, const std::string& target, std::size_t cap) {
    if (cap == 0) throw Error(ErrorCode::invalid_argument, "path cap must be positive");
    GraphIndex g(tree);
    auto [start, goal] = endpoints(tree, g, target);

    PathEnumeration out;
    EdgeWalk walk(g);
    Path path{start};
    struct Rec {
        const GraphIndex& g;
        EdgeWalk& walk;
        std::size_t goal;
        std::size_t cap;
        PathEnumeration& out;
        Path& path;

        bool visit(std::size_t u) {
            if (u == goal) {
                if (out.paths.size() == cap) {
                    out.truncated = true;
                    return false;
                }
                out.paths.push_back(to_ids(g, path));
            }
            if (!walk.can_reach(u, goal)) return true;
            for (const auto& o : g.out(u)) {
                if (walk.used(o.edge)) continue;
                walk.use(o.edge);
                path.push_back(o.target);
                bool go_on = visit(o.target);
                path.pop_back();
                walk.release(o.edge);
                if (!go_on) return false;
            }
            return true;
        }
    } rec{g, walk, goal, cap, out, path};
    rec.visit(start);
    return out;
}

History sample_path(const DialogueTree& tree, const std::string& target, std::uint64_t seed) {
    GraphIndex g(tree);
    auto [start, goal] = endpoints(tree, g, target);
    EdgeWalk walk(g);
    if (!walk.can_reach(start, goal))
        throw Error(ErrorCode::unreachable, "target '" + target + "' is unreachable from start");

    Rng rng(seed);
    auto all = all_edge_simple_paths(tree, target, exact_sampling_limit);
    if (!all.truncated) return History{all.paths[rng.index(all.paths.size())], false};

    // Too many paths to enumerate: walk randomly, choosing among the moves
    // that keep target reachable plus, at target, the option to stop.
    Path path{start};
    std::size_t u = start;
    while (true) {
        std::vector<std::size_t> moves;
        for (const auto& o : g.out(u)) {
            if (walk.used(o.edge)) continue;
            walk.use(o.edge);
            bool ok = walk.can_reach(o.target, goal);
            walk.release(o.edge);
            if (ok) moves.push_back(o.edge);
        }
        const std::size_t options = moves.size() + (u == goal ? 1 : 0);
        const auto pick = rng.index(options);
        if (pick == moves.size()) break;  // stop at target
        walk.use(moves[pick]);
        u = g.edge_target(moves[pick]);
        path.push_back(u);
    }
    return History{to_ids(g, path), false};
}

bool is_valid_history(const DialogueTree& tree, const std::vector<std::string>& ids, std::string* why) {
    auto fail = [&](std::string msg) {
        if (why) *why = std::move(msg);
        return false;
    };
    if (ids.empty()) return fail("empty history");
    if (ids.front() != tree.start_id) return fail("history does not begin at the start node");
    std::set<EdgeKey> used;
    for (std::size_t i = 0; i + 1 < ids.size(); ++i) {
        if (!tree.has_edge(ids[i], ids[i + 1])) return fail("no edge " + ids[i] + "->" + ids[i + 1]);
        if (!used.insert({ids[i], ids[i + 1]}).second) return fail("edge repeated: " + ids[i] + "->" + ids[i + 1]);
    }
    for (const auto& id : ids)
        if (!tree.contains(id)) return fail("unknown node " + id);
    return true;
}

namespace {

struct BfsResult {
    std::vector<std::string> order;
    std::map<std::string, std::string> parent;
};

BfsResult bfs(const DialogueTree& tree) {
    BfsResult r;
    if (!tree.contains(tree.start_id)) return r;
    GraphIndex g(tree);
    std::vector<char> seen(g.node_count(), 0);
    auto s = *g.find(tree.start_id);
    std::deque<std::size_t> queue{s};
    seen[s] = 1;
    while (!queue.empty()) {
        auto u = queue.front();
        queue.pop_front();
        r.order.push_back(g.id(u));
        for (const auto& o : g.out(u)) {
            if (seen[o.target]) continue;
            seen[o.target] = 1;
            r.parent[g.id(o.target)] = g.id(u);
            queue.push_back(o.target);
        }
    }
    return r;
}

}  // namespace

std::vector<std::string> canonical_order(const DialogueTree& tree) { return bfs(tree).order; }

DialogueTree induced_subtree(const DialogueTree& tree, const std::set<std::string>& keep) {
    DialogueTree out;
    out.start_id = tree.start_id;
    for (const auto& id : keep) {
        auto it = tree.nodes.find(id);
        if (it != tree.nodes.end()) out.nodes.emplace(id, it->second);
    }
    for (const auto& e : tree.edges)
        if (out.contains(e.from) && out.contains(e.to)) out.edges.push_back(e);
    return out;
}

std::vector<UtteranceNode> GenerationTask::history_nodes() const {
    std::vector<UtteranceNode> out;
    out.reserve(history.ids.size());
    for (const auto& id : history.ids) out.push_back(subtree.node(id));
    return out;
}

std::vector<GenerationTask> build_nup_items(const DialogueTree& tree, const DialogueSpec& spec,
                                            std::size_t variants_per_node, std::uint64_t seed,
                                            const std::string& dialogue_id) {
    std::vector<GenerationTask> items;
    if (variants_per_node == 0) return items;
    auto walk = bfs(tree);
    std::set<std::string> prefix;
    for (std::size_t i = 0; i < walk.order.size(); ++i) {
        const auto& target_id = walk.order[i];
        if (i == 0) {
            prefix.insert(target_id);
            continue;
        }
        DialogueTree subtree = induced_subtree(tree, prefix);
        const auto& parent = walk.parent.at(target_id);
        const auto& target = tree.node(target_id);
        for (std::size_t v = 0; v < variants_per_node; ++v) {
            GenerationTask task;
            task.dialogue_id = dialogue_id;
            task.item_id = dialogue_id + "/" + target_id;
            if (variants_per_node > 1) task.item_id += "#" + std::to_string(v);
            task.spec = spec;
            task.most_recent = parent;
            task.history = v == 0 ? linearize(subtree, parent)
                                  : sample_path(subtree, parent, Rng::derive(seed, i * 1000003ULL + v));
            task.subtree = subtree;
            task.gold_target = target;
            task.gold_facts = target.support_facts;
            items.push_back(std::move(task));
        }
        prefix.insert(target_id);
    }
    return items;
}

}  // namespace qw
