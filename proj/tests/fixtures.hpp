#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qw/model.hpp"

namespace fx {

inline qw::UtteranceNode node(std::string id, std::string speaker, std::string text,
                              std::vector<qw::FactRef> facts = {}) {
    return {std::move(id), std::move(speaker), std::move(text), std::move(facts), qw::Origin::gold};
}

// Nodes are created for every endpoint; speakers alternate by first
// appearance starting with the NPC.
inline qw::DialogueTree graph(const std::string& start, const std::vector<std::pair<std::string, std::string>>& edges) {
    qw::DialogueTree t;
    t.start_id = start;
    auto ensure = [&](const std::string& id) {
        if (t.contains(id)) return;
        const bool npc = t.nodes.size() % 2 == 0;
        t.nodes.emplace(id, node(id, npc ? "Agnes Needham" : "Player", "line " + id));
    };
    ensure(start);
    for (const auto& [a, b] : edges) {
        ensure(a);
        ensure(b);
        t.edges.push_back({a, b, false});
    }
    return t;
}

inline std::vector<qw::Statement> stmts(const std::string& source, const std::vector<std::string>& texts) {
    std::vector<qw::Statement> out;
    for (std::size_t i = 0; i < texts.size(); ++i) out.push_back({source, static_cast<int>(i), texts[i]});
    return out;
}

inline qw::DialogueSpec agnes_spec() {
    qw::DialogueSpec s;
    s.quest_name = "The Raptidon Menace";
    s.participants = {{"Player", true}, {"Agnes Needham", false}};
    s.bios.push_back({"Raptidon", stmts("bio:Raptidon", {"Raptidons are large flightless birds.",
                                                         "A Raptidon has been raiding the farms."})});
    s.bios.push_back({"Agnes Needham", stmts("bio:Agnes Needham", {"Agnes Needham is a farmer near Fairview.",
                                                                   "Agnes lost three hens last week."})});
    qw::Objective in;
    in.name = "Hunt the Raptidon";
    in.game_log = stmts("log:hunt", {"Agnes asked me to deal with the Raptidon.", "It nests in the hills."});
    in.walkthrough = stmts("walk:hunt", {"Go north to the hills."});
    s.in_objectives.push_back(in);
    qw::Objective out;
    out.name = "Collect the reward";
    out.game_log = stmts("log:reward", {"Agnes paid me for my trouble."});
    s.out_objectives.push_back(out);
    return s;
}

inline qw::QuestSpec agnes_quest() {
    auto s = agnes_spec();
    qw::QuestSpec q;
    q.quest_name = s.quest_name;
    q.objectives = {s.in_objectives[0], s.out_objectives[0]};
    return q;
}

// start(Agnes) -> p1(Player) -> a2(Agnes, 2 facts) -> p3(Player)
//                           \-> a4(Agnes, 0 facts)
inline qw::Dialogue agnes_dialogue(std::string id = "agnes-1") {
    qw::Dialogue d;
    d.id = std::move(id);
    d.spec = agnes_spec();
    auto& t = d.tree;
    t.start_id = "start";
    t.nodes.emplace("start", node("start", "Agnes Needham", "Oh, a traveller! Please, I need help.",
                                  {{"bio:Agnes Needham", 0}}));
    t.nodes.emplace("p1", node("p1", "Player", "What is the matter?"));
    t.nodes.emplace("a2", node("a2", "Agnes Needham", "A Raptidon took my hens. It nests in the hills.",
                               {{"bio:Agnes Needham", 1}, {"log:hunt", 1}}));
    t.nodes.emplace("p3", node("p3", "Player", "I will go north then."));
    t.nodes.emplace("a4", node("a4", "Agnes Needham", "Never mind, then."));
    t.edges = {{"start", "p1", false}, {"p1", "a2", false}, {"a2", "p3", false}, {"p1", "a4", true}};
    return d;
}

}  // namespace fx
