#include "qw/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "qw/rng.hpp"
#include "qw/text.hpp"

namespace qw::synthetic {

namespace {

constexpr const char* first_names[] = {"Agnes", "Borin", "Cassia", "Dorn", "Elsbeth", "Fenwick",
                                       "Greta", "Hollis", "Ysolde", "Jarrow", "Kestrel", "Lorcan"};
constexpr const char* last_names[] = {"Needham", "Ashford", "Vale", "Thorne", "Marsh", "Quill", "Brand"};
constexpr const char* places[] = {"Riverwood", "the Old Mill", "Stonehollow", "the Salt Road", "Greyharbor",
                                  "the Sunken Chapel", "Oakmere"};
constexpr const char* items[] = {"amulet", "ledger", "silver key", "map", "lantern", "sealed letter", "dagger"};
constexpr const char* traits[] = {"distrusts strangers", "owes money to the guild", "was once a soldier",
                                  "keeps bees behind the house", "lost a brother in the war",
                                  "sings at the tavern", "collects old coins"};
constexpr const char* verbs[] = {"Find", "Return", "Retrieve", "Deliver", "Recover", "Hide"};
constexpr const char* openers[] = {"Well,", "Listen,", "Aye,", "Hm.", "Look,", "Honestly,"};
constexpr const char* player_lines[] = {
    "What do you need?",  "Tell me more.",        "Where should I go?", "I can help with that.",
    "Why does it matter?", "Who else knows?",     "I'll be careful.",   "Is there a reward?",
};

template <typename T, std::size_t N>
const T& pick(Rng& rng, const T (&arr)[N]) {
    return arr[rng.index(N)];
}

std::string person(Rng& rng) { return std::string(pick(rng, first_names)) + " " + pick(rng, last_names); }

std::vector<Statement> statements(const std::string& source, const std::vector<std::string>& texts) {
    std::vector<Statement> out;
    for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({source, static_cast<int>(i), texts[i]});
    return out;
}

std::string node_id(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "n%02zu", i);
    return buf;
}

}  // namespace

DialogueTree random_graph(std::uint64_t seed, std::size_t max_nodes, std::size_t max_edges) {
    Rng rng(seed);
    const std::size_t n = 1 + rng.index(std::max<std::size_t>(max_nodes, 1));
    DialogueTree t;
    for (std::size_t i = 0; i < n; ++i) {
        UtteranceNode node;
        node.id = "n" + std::to_string(i);
        node.speaker = i % 2 == 0 ? "Guide" : "Player";
        node.text = "line " + std::to_string(i);
        t.nodes.emplace(node.id, node);
    }
    t.start_id = "n0";
    const std::size_t m = std::min(rng.index(max_edges + 1), n * n);
    std::set<std::pair<std::size_t, std::size_t>> used;
    while (used.size() < m) {
        auto from = rng.index(n);
        auto to = rng.index(n);
        if (used.insert({from, to}).second)
            t.edges.push_back({"n" + std::to_string(from), "n" + std::to_string(to), rng.index(4) == 0});
    }
    return t;
}

DialogueSpec random_spec(std::uint64_t seed, const std::string& quest_name) {
    Rng rng(seed);
    DialogueSpec spec;
    spec.quest_name = quest_name;

    std::vector<std::string> npcs{person(rng)};
    if (rng.index(2) == 1) {
        auto other = person(rng);
        if (other != npcs.front()) npcs.push_back(other);
    }
    const std::string place = pick(rng, places);
    const std::string item = pick(rng, items);

    spec.participants.push_back({"Player", true});
    for (const auto& n : npcs) spec.participants.push_back({n, false});

    for (const auto& n : npcs) {
        std::vector<std::string> texts{n + " lives in " + place + ".", n + " " + pick(rng, traits) + "."};
        if (rng.index(2) == 1) texts.push_back(n + " " + pick(rng, traits) + ".");
        spec.bios.push_back({n, statements("bio:" + n, texts)});
    }
    spec.bios.push_back({place, statements("bio:" + place, {place + " is a quiet place on the edge of the valley.",
                                                            "Travellers rarely stop in " + place + "."})});

    const std::size_t in_count = 1 + rng.index(2);
    for (std::size_t i = 0; i < in_count; ++i) {
        Objective o;
        o.name = std::string(pick(rng, verbs)) + " the " + item + (i ? " again" : "");
        o.game_log = statements("log:" + o.name, {npcs.front() + " asked me to " + text::to_lower(o.name) + ".",
                                                  "The " + item + " was last seen near " + place + "."});
        o.walkthrough = statements("walk:" + o.name, {"Talk to " + npcs.front() + " in " + place + "."});
        spec.in_objectives.push_back(std::move(o));
    }
    Objective out;
    out.name = "Report back to " + npcs.front();
    out.game_log = statements("log:" + out.name, {"I should tell " + npcs.front() + " what I found."});
    spec.out_objectives.push_back(std::move(out));
    return spec;
}

QuestSpec quest_for(const DialogueSpec& spec) {
    QuestSpec q;
    q.quest_name = spec.quest_name;
    q.objectives = spec.in_objectives;
    for (const auto& o : spec.out_objectives) q.objectives.push_back(o);
    return q;
}

Dialogue random_dialogue(std::uint64_t seed, const std::string& id, const DialogueSpec& spec, std::size_t min_nodes,
                         std::size_t max_nodes) {
    Rng rng(seed);
    Dialogue d;
    d.id = id;
    d.spec = spec;

    std::vector<FactRef> facts;
    std::vector<std::string> fact_texts;
    for (const auto* s : quest_statements(spec)) {
        facts.push_back({s->source_id, s->index});
        fact_texts.push_back(s->text);
    }
    for (const auto* s : bio_statements(spec)) {
        facts.push_back({s->source_id, s->index});
        fact_texts.push_back(s->text);
    }
    const auto npcs = spec.npc_names();
    const auto player = spec.player_name().value_or("Player");

    const std::size_t n = min_nodes + rng.index(max_nodes - min_nodes + 1);
    std::vector<bool> npc_turn(n);
    auto& t = d.tree;
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t parent = i == 0 ? 0 : rng.index(i);
        npc_turn[i] = i == 0 ? true : !npc_turn[parent];
        UtteranceNode node;
        node.id = node_id(i);
        if (npc_turn[i]) {
            node.speaker = npcs.empty() ? player : npcs[rng.index(npcs.size())];
            const std::size_t k = facts.empty() ? 0 : rng.index(3);
            std::set<std::size_t> chosen;
            for (std::size_t j = 0; j < k; ++j) chosen.insert(rng.index(facts.size()));
            node.text = pick(rng, openers);
            for (auto c : chosen) {
                node.support_facts.push_back(facts[c]);
                node.text += " " + fact_texts[c];
            }
            if (chosen.empty()) node.text += " There is not much more to say.";
        } else {
            node.speaker = player;
            node.text = pick(rng, player_lines);
        }
        if (i > 0) t.edges.push_back({node_id(parent), node.id, rng.index(5) == 0});
        t.nodes.emplace(node.id, std::move(node));
    }
    t.start_id = node_id(0);

    std::set<EdgeKey> present;
    for (const auto& e : t.edges) present.insert({e.from, e.to});
    const std::size_t extra = rng.index(3);
    for (std::size_t j = 0; j < extra && n > 1; ++j) {
        auto from = node_id(rng.index(n));
        auto to = node_id(rng.index(n));
        if (present.insert({from, to}).second) t.edges.push_back({from, to, false});
    }
    return d;
}

Corpus corpus(std::uint64_t seed, std::size_t quests, std::size_t dialogues_per_quest) {
    Corpus c;
    for (std::size_t q = 0; q < quests; ++q) {
        char name[32];
        std::snprintf(name, sizeof name, "quest-%03zu", q + 1);
        auto spec = random_spec(Rng::derive(seed, q), name);
        c.quests.push_back(quest_for(spec));
        for (std::size_t k = 0; k < dialogues_per_quest; ++k) {
            char id[48];
            std::snprintf(id, sizeof id, "%s-d%zu", name, k + 1);
            c.dialogues.push_back(random_dialogue(Rng::derive(seed, 1000003 * (q + 1) + k), id, spec));
        }
    }
    return c;
}

}  // namespace qw::synthetic
