#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qw/error.hpp"
#include "qw/linearizer.hpp"
#include "qw/synthetic.hpp"

using namespace qw;

namespace {

using Ids = std::vector<std::string>;

DialogueTree cycle_fixture() { return fx::graph("a", {{"a", "b"}, {"b", "c"}, {"a", "c"}, {"c", "b"}}); }

}  // namespace

TEST_CASE("linearize trivial shapes") {
    auto single = fx::graph("a", {});
    CHECK(linearize(single, "a").ids == Ids{"a"});

    auto chain = fx::graph("a", {{"a", "b"}, {"b", "c"}});
    auto h = linearize(chain, "c");
    CHECK(h.ids == Ids{"a", "b", "c"});
    CHECK(h.edge_count() == 2);
    CHECK_FALSE(h.budget_truncated);
}

TEST_CASE("linearize takes the longest edge-simple path through a cycle") {
    auto t = cycle_fixture();
    auto h = linearize(t, "c");
    CHECK(h.ids == Ids{"a", "c", "b", "c"});
    CHECK(h.ids == oracle::longest(oracle::edge_simple_paths(t, "c")));
}

TEST_CASE("linearize errors") {
    auto t = fx::graph("a", {{"a", "b"}});
    t.nodes.emplace("x", fx::node("x", "Player", "unreached"));
    try {
        linearize(t, "x");
        FAIL("expected unreachable");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::unreachable);
    }
    CHECK_THROWS_AS(linearize(t, "missing"), Error);
}

TEST_CASE("all_edge_simple_paths counts") {
    auto chain = fx::graph("a", {{"a", "b"}, {"b", "c"}});
    CHECK(all_edge_simple_paths(chain, "c", 100).paths.size() == 1);

    auto t = cycle_fixture();
    auto e = all_edge_simple_paths(t, "c", 100);
    CHECK(e.paths.size() == 3);
    CHECK_FALSE(e.truncated);
    std::set<Ids> got(e.paths.begin(), e.paths.end());
    CHECK(got == std::set<Ids>{{"a", "b", "c"}, {"a", "c"}, {"a", "c", "b", "c"}});

    auto start = all_edge_simple_paths(chain, "a", 100);
    REQUIRE(start.paths.size() == 1);
    CHECK(start.paths[0] == Ids{"a"});

    auto capped = all_edge_simple_paths(t, "c", 2);
    CHECK(capped.paths.size() == 2);
    CHECK(capped.truncated);
    CHECK_THROWS_AS(all_edge_simple_paths(t, "c", 0), Error);
}

TEST_CASE("linearize matches brute force on random graphs") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        auto t = synthetic::random_graph(seed, 10, 14);
        for (const auto& [id, n] : t.nodes) {
            auto oracle_paths = oracle::edge_simple_paths(t, id);
            if (oracle_paths.empty()) {
                CHECK_THROWS_AS(linearize(t, id), Error);
                continue;
            }
            auto h = linearize(t, id);
            CHECK_FALSE(h.budget_truncated);
            CHECK(h.ids == oracle::longest(oracle_paths));
            CHECK(is_valid_history(t, h.ids));
            CHECK(linearize(t, id) == h);
            auto e = all_edge_simple_paths(t, id, 1'000'000);
            CHECK(e.paths.size() == oracle_paths.size());
        }
    }
}

TEST_CASE("linearize falls back to a flagged greedy path when the budget runs out") {
    // dense graph with many edge-simple paths
    std::vector<std::pair<std::string, std::string>> edges;
    const Ids ids{"a", "b", "c", "d", "e", "f", "g"};
    for (const auto& x : ids)
        for (const auto& y : ids)
            if (x != y) edges.emplace_back(x, y);
    auto t = fx::graph("a", edges);
    auto h = linearize(t, "g", 50);
    CHECK(h.budget_truncated);
    CHECK(h.ids.back() == "g");
    CHECK(is_valid_history(t, h.ids));
}

TEST_CASE("is_valid_history") {
    auto t = cycle_fixture();
    std::string why;
    CHECK(is_valid_history(t, {"a", "c", "b", "c"}));
    CHECK_FALSE(is_valid_history(t, {"b", "c"}, &why));
    CHECK_FALSE(why.empty());
    CHECK_FALSE(is_valid_history(t, {"a", "b", "a"}));
    CHECK_FALSE(is_valid_history(t, {"a", "c", "b", "c", "b"}));
    CHECK_FALSE(is_valid_history(t, {}));
}

TEST_CASE("sample_path") {
    auto chain = fx::graph("a", {{"a", "b"}, {"b", "c"}});
    for (std::uint64_t s = 0; s < 10; ++s) CHECK(sample_path(chain, "c", s).ids == Ids{"a", "b", "c"});

    auto t = cycle_fixture();
    std::set<Ids> seen;
    for (std::uint64_t s = 0; s < 100; ++s) {
        auto h = sample_path(t, "c", s);
        CHECK(is_valid_history(t, h.ids));
        seen.insert(h.ids);
    }
    auto all = oracle::edge_simple_paths(t, "c");
    CHECK(seen == std::set<Ids>(all.begin(), all.end()));
    CHECK(sample_path(t, "c", 42) == sample_path(t, "c", 42));
}

TEST_CASE("sample_path random walk on graphs with many paths") {
    std::vector<std::pair<std::string, std::string>> edges;
    const Ids ids{"a", "b", "c", "d", "e", "f", "g", "h"};
    for (const auto& x : ids)
        for (const auto& y : ids)
            if (x != y) edges.emplace_back(x, y);
    auto t = fx::graph("a", edges);
    for (std::uint64_t s = 0; s < 20; ++s) {
        auto h = sample_path(t, "h", s);
        CHECK(h.ids.back() == "h");
        CHECK(is_valid_history(t, h.ids));
    }
}

TEST_CASE("build_nup_items") {
    auto chain = fx::graph("a", {{"a", "b"}, {"b", "c"}});
    auto spec = fx::agnes_spec();
    auto items = build_nup_items(chain, spec, 1, 0, "d");
    REQUIRE(items.size() == 2);
    CHECK(items[0].gold_target->id == "b");
    CHECK(items[1].gold_target->id == "c");
    CHECK(items[1].most_recent == "b");
    CHECK(items[1].history.ids == Ids{"a", "b"});
    CHECK(items[1].item_id == "d/c");
    CHECK_FALSE(items[1].subtree.contains("c"));

    auto five = build_nup_items(chain, spec, 5, 3, "d");
    CHECK(five.size() == 10);
    for (std::size_t i = 0; i < 5; ++i) CHECK(five[i].history == five[0].history);
}

TEST_CASE("build_nup_items histories are edge-simple in the item subtree") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto d = synthetic::random_dialogue(seed, "d", synthetic::random_spec(seed, "q"));
        for (const auto& task : build_nup_items(d.tree, d.spec, 3, seed, d.id)) {
            CHECK(task.history.ids.back() == task.most_recent);
            CHECK(is_valid_history(task.subtree, task.history.ids));
            CHECK(d.tree.has_edge(task.most_recent, task.gold_target->id));
        }
    }
}

TEST_CASE("canonical_order and induced_subtree") {
    auto t = fx::graph("a", {{"a", "c"}, {"a", "b"}, {"b", "d"}, {"c", "d"}});
    CHECK(canonical_order(t) == Ids{"a", "b", "c", "d"});
    auto sub = induced_subtree(t, {"a", "b", "d"});
    CHECK(sub.nodes.size() == 3);
    CHECK(sub.edges.size() == 2);
}

TEST_CASE("linearize_full covers the most nodes") {
    auto d = fx::agnes_dialogue();
    auto h = linearize_full(d.tree);
    CHECK(h.ids == Ids{"start", "p1", "a2", "p3"});
}
