#include <doctest.h>

#include <deque>
#include <set>

#include "fixtures.hpp"
#include "qw/corpus_json.hpp"
#include "qw/error.hpp"
#include "qw/model.hpp"
#include "qw/synthetic.hpp"

using namespace qw;

namespace {

const std::vector<std::string> agnes_and_player{"Agnes Needham", "Player"};

std::set<std::string> reachable_over(const DialogueTree& t, const std::vector<Edge>& edges) {
    std::set<std::string> seen{t.start_id};
    std::deque<std::string> q{t.start_id};
    while (!q.empty()) {
        auto cur = q.front();
        q.pop_front();
        for (const auto& e : edges)
            if (e.from == cur && seen.insert(e.to).second) q.push_back(e.to);
    }
    return seen;
}

}  // namespace

TEST_CASE("validate_tree accepts a clean chain") {
    auto t = fx::graph("a", {{"a", "b"}, {"b", "c"}});
    CHECK(validate_tree(t, agnes_and_player).findings.empty());
}

TEST_CASE("validate_tree flags an unknown speaker") {
    auto t = fx::graph("a", {{"a", "b"}});
    t.nodes["b"].speaker = "Ghost";
    auto r = validate_tree(t, agnes_and_player);
    CHECK(r.count("unknown speaker") == 1);
    CHECK_FALSE(r.ok());
}

TEST_CASE("validate_tree flags dangling edges and unreachable nodes") {
    auto t = fx::graph("a", {{"a", "b"}});
    t.edges.push_back({"b", "zzz", false});
    t.nodes.emplace("island", fx::node("island", "Player", "alone"));
    auto r = validate_tree(t, agnes_and_player);
    CHECK(r.count("dangling edge") == 1);
    CHECK(r.count("unreachable") == 1);
}

TEST_CASE("validate_tree flags missing start, duplicate edges and empty text") {
    auto t = fx::graph("a", {{"a", "b"}, {"a", "b"}});
    t.nodes["b"].text = "  ";
    auto r = validate_tree(t, agnes_and_player);
    CHECK(r.count("duplicate edge") == 1);
    CHECK(r.count("empty text") == 1);
    t.start_id = "nope";
    CHECK(validate_tree(t, agnes_and_player).count("missing start") == 1);
}

TEST_CASE("validate_spec") {
    auto s = fx::agnes_spec();
    CHECK(validate_spec(s).findings.empty());

    auto twice = s;
    twice.participants.push_back({"Agnes Needham", false});
    CHECK(validate_spec(twice).count("duplicate participant") == 1);

    auto no_player = s;
    no_player.participants[0].player = false;
    CHECK(validate_spec(no_player).count("player count") == 1);

    auto gap = s;
    gap.bios[0].statements[1].index = 5;
    CHECK_FALSE(validate_spec(gap).ok());

    auto no_bio = s;
    no_bio.participants.push_back({"Stranger", false});
    auto r = validate_spec(no_bio);
    CHECK(r.ok());
    CHECK(r.count("missing biography") == 1);
}

TEST_CASE("extract_quest_subgraph without conditioned edges is the identity") {
    auto t = fx::graph("a", {{"a", "b"}, {"b", "c"}, {"c", "a"}});
    CHECK(extract_quest_subgraph(t, {}) == t);
}

TEST_CASE("extract_quest_subgraph drops a non-whitelisted conditioned edge") {
    auto t = fx::graph("a", {{"a", "b"}, {"b", "c"}});
    t.edges[1].conditioned = true;
    auto sub = extract_quest_subgraph(t, {});
    CHECK(sub.nodes.size() == 2);
    CHECK(sub.contains("a"));
    CHECK(sub.contains("b"));
    REQUIRE(sub.edges.size() == 1);
    CHECK(sub.edges[0].from == "a");
    CHECK(sub.edges[0].to == "b");
}

TEST_CASE("extract_quest_subgraph keeps a whitelisted branch of a diamond") {
    auto t = fx::graph("a", {{"a", "b"}, {"a", "c"}, {"b", "d"}, {"c", "d"}, {"d", "e"}});
    t.edges[0].conditioned = true;  // a->b
    t.edges[1].conditioned = true;  // a->c
    const std::set<EdgeKey> keep{{"a", "c"}};
    auto sub = extract_quest_subgraph(t, keep);

    std::vector<Edge> kept;
    for (const auto& e : t.edges)
        if (!e.conditioned || keep.count({e.from, e.to})) kept.push_back(e);
    const auto expected = reachable_over(t, kept);
    std::set<std::string> got;
    for (const auto& [id, n] : sub.nodes) got.insert(id);
    CHECK(got == expected);
    CHECK(got.count("c") == 1);
    CHECK(got.count("b") == 0);
    CHECK(validate_tree(sub, agnes_and_player).count("unreachable") == 0);
}

TEST_CASE("extract_quest_subgraph never leaves unreachable nodes") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto t = synthetic::random_graph(seed, 10, 14);
        std::set<EdgeKey> keep;
        for (std::size_t i = 0; i < t.edges.size(); i += 2) keep.insert({t.edges[i].from, t.edges[i].to});
        auto sub = extract_quest_subgraph(t, keep);
        CHECK(validate_tree(sub, {"Guide", "Player"}).count("unreachable") == 0);
    }
}

TEST_CASE("split_by_quests partitions quests exactly") {
    auto c = synthetic::corpus(11, 45);
    auto split = split_by_quests(c, {28, 5, 12}, 1);
    REQUIRE(split.split_assignment);
    std::map<Split, std::set<std::string>> parts;
    for (const auto& [q, s] : *split.split_assignment) parts[s].insert(q);
    CHECK(parts[Split::train].size() == 28);
    CHECK(parts[Split::dev].size() == 5);
    CHECK(parts[Split::test].size() == 12);
    std::set<std::string> all;
    for (const auto& [s, names] : parts) all.insert(names.begin(), names.end());
    CHECK(all.size() == 45);
    CHECK(validate_corpus(split).ok());

    CHECK(split_by_quests(c, {28, 5, 12}, 1).split_assignment == split.split_assignment);
    CHECK(split_by_quests(c, {28, 5, 12}, 2).split_assignment != split.split_assignment);
}

TEST_CASE("split_by_quests degenerate and invalid counts") {
    auto c = synthetic::corpus(3, 6);
    auto all_train = split_by_quests(c, {6, 0, 0}, 9);
    for (const auto& [q, s] : *all_train.split_assignment) CHECK(s == Split::train);
    CHECK_THROWS_AS(split_by_quests(c, {5, 0, 0}, 9), Error);
}

TEST_CASE("corpus_stats on a small fixture") {
    Corpus c;
    c.quests.push_back(fx::agnes_quest());
    Dialogue d;
    d.id = "d";
    d.spec = fx::agnes_spec();
    d.tree = fx::graph("a", {{"a", "b"}, {"b", "c"}, {"c", "d"}});
    d.tree.nodes["a"].support_facts = {{"bio:Raptidon", 0}};
    c.dialogues.push_back(d);
    auto s = corpus_stats(c);
    CHECK(s.node_count == 4);
    CHECK(s.npc_node_count == 2);
    CHECK(s.annotated_npc_node_count == 1);
    REQUIRE(s.npc_annotated_fraction);
    CHECK(*s.npc_annotated_fraction == 0.5);
    CHECK(*s.annotated_fraction == 0.25);
    CHECK(*s.npc_annotated_fraction >= *s.annotated_fraction);
}

TEST_CASE("corpus_stats on an empty corpus") {
    auto s = corpus_stats(Corpus{});
    CHECK(s.dialogue_count == 0);
    CHECK(s.node_count == 0);
    CHECK_FALSE(s.annotated_fraction);
    CHECK_FALSE(s.npc_annotated_fraction);
    CHECK_FALSE(s.mean_facts_per_npc_node);
    CHECK_FALSE(s.mean_quest_statements);
}

TEST_CASE("corpus_stats means match hand totals") {
    auto c = synthetic::corpus(5, 3);
    auto s = corpus_stats(c);
    std::size_t nodes = 0, npc = 0, facts = 0, q = 0, b = 0;
    for (const auto& d : c.dialogues) {
        nodes += d.tree.nodes.size();
        for (const auto& [id, n] : d.tree.nodes) {
            if (d.spec.is_player(n.speaker)) continue;
            ++npc;
            facts += n.support_facts.size();
        }
        q += quest_statements(d.spec).size();
        b += bio_statements(d.spec).size();
    }
    CHECK(s.node_count == nodes);
    CHECK(s.npc_node_count == npc);
    CHECK(*s.mean_facts_per_npc_node == doctest::Approx(double(facts) / double(npc)).epsilon(1e-12));
    CHECK(*s.mean_quest_statements == doctest::Approx(double(q) / 3.0).epsilon(1e-12));
    CHECK(*s.mean_bio_statements == doctest::Approx(double(b) / 3.0).epsilon(1e-12));
    CHECK(*s.annotated_fraction >= 0.0);
    CHECK(*s.annotated_fraction <= 1.0);
}

TEST_CASE("resolve_fact lookups and errors") {
    auto s = fx::agnes_spec();
    CHECK(resolve_fact(s, {"bio:Agnes Needham", 0}).text == "Agnes Needham is a farmer near Fairview.");
    CHECK(fact_label(s, {"bio:Agnes Needham", 0}) == "Agnes Needham");
    CHECK(fact_label(s, {"log:hunt", 1}) == "Hunt the Raptidon");
    try {
        resolve_fact(s, {"bio:Agnes Needham", 2});
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::out_of_range);
        CHECK(std::string(e.what()).find("index out of range") != std::string::npos);
    }
    CHECK_THROWS_AS(resolve_fact(s, {"bio:Nobody", 0}), Error);
}

TEST_CASE("every gold fact in a synthetic corpus resolves") {
    auto c = synthetic::corpus(21, 10);
    std::size_t n = 0;
    for (const auto& d : c.dialogues)
        for (const auto& [id, node] : d.tree.nodes)
            for (const auto& f : node.support_facts) {
                CHECK_NOTHROW(resolve_fact(d.spec, f));
                ++n;
            }
    CHECK(n > 0);
}

TEST_CASE("validate_corpus catches unknown quests and unresolvable facts") {
    Corpus c;
    c.quests.push_back(fx::agnes_quest());
    c.dialogues.push_back(fx::agnes_dialogue());
    CHECK(validate_corpus(c).ok());

    auto bad = c;
    bad.dialogues[0].tree.nodes["a2"].support_facts.push_back({"bio:Raptidon", 7});
    CHECK(validate_corpus(bad).count("unresolvable fact") == 1);

    auto orphan = c;
    orphan.dialogues[0].spec.quest_name = "Other";
    CHECK(validate_corpus(orphan).count("unknown quest") == 1);
}

TEST_CASE("canonical JSON round-trips byte for byte") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        auto c = split_by_quests(synthetic::corpus(seed, 8, 2), {5, 1, 2}, seed);
        REQUIRE(validate_corpus(c).ok());
        const auto text = canonical_json(c);
        auto back = parse_corpus(text);
        CHECK(back == c);
        CHECK(canonical_json(back) == text);
    }
}

TEST_CASE("corpus parsing rejects malformed documents") {
    CHECK_THROWS_AS(parse_corpus("{not json"), Error);
    CHECK_THROWS_AS(parse_corpus(R"({"quests": 3, "dialogues": []})"), Error);
    auto j = json(fx::agnes_dialogue());
    j["tree"]["nodes"].push_back(j["tree"]["nodes"][0]);
    try {
        j.get<Dialogue>();
        FAIL("duplicate node id accepted");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::parse_error);
    }
}
