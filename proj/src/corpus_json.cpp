#include "qw/corpus_json.hpp"

#include <fstream>
#include <sstream>

#include "qw/error.hpp"

namespace qw {

void to_json(json& j, const Statement& s) { j = json{{"source", s.source_id}, {"i", s.index}, {"text", s.text}}; }

void from_json(const json& j, Statement& s) {
    j.at("source").get_to(s.source_id);
    j.at("i").get_to(s.index);
    j.at("text").get_to(s.text);
}

void to_json(json& j, const Objective& o) {
    j = json{{"name", o.name}, {"game_log", o.game_log}, {"walkthrough", o.walkthrough}};
}

void from_json(const json& j, Objective& o) {
    j.at("name").get_to(o.name);
    o.game_log = j.value("game_log", std::vector<Statement>{});
    o.walkthrough = j.value("walkthrough", std::vector<Statement>{});
}

void to_json(json& j, const QuestSpec& q) {
    j = json{{"name", q.quest_name},
             {"synopsis", q.synopsis},
             {"synopsis_walkthrough", q.synopsis_walkthrough},
             {"objectives", q.objectives}};
}

void from_json(const json& j, QuestSpec& q) {
    j.at("name").get_to(q.quest_name);
    q.synopsis = j.value("synopsis", std::vector<Statement>{});
    q.synopsis_walkthrough = j.value("synopsis_walkthrough", std::vector<Statement>{});
    q.objectives = j.value("objectives", std::vector<Objective>{});
}

void to_json(json& j, const BiographyPassage& b) { j = json{{"entity", b.entity_name}, {"statements", b.statements}}; }

void from_json(const json& j, BiographyPassage& b) {
    j.at("entity").get_to(b.entity_name);
    j.at("statements").get_to(b.statements);
}

void to_json(json& j, const Participant& p) { j = json{{"name", p.name}, {"player", p.player}}; }

void from_json(const json& j, Participant& p) {
    j.at("name").get_to(p.name);
    p.player = j.value("player", false);
}

void to_json(json& j, const DialogueSpec& s) {
    j = json{{"quest", s.quest_name},
             {"in_objectives", s.in_objectives},
             {"out_objectives", s.out_objectives},
             {"bios", s.bios},
             {"participants", s.participants}};
}

void from_json(const json& j, DialogueSpec& s) {
    j.at("quest").get_to(s.quest_name);
    s.in_objectives = j.value("in_objectives", std::vector<Objective>{});
    s.out_objectives = j.value("out_objectives", std::vector<Objective>{});
    s.bios = j.value("bios", std::vector<BiographyPassage>{});
    j.at("participants").get_to(s.participants);
}

void to_json(json& j, const FactRef& f) { j = json{{"source", f.source_id}, {"i", f.index}}; }

void from_json(const json& j, FactRef& f) {
    j.at("source").get_to(f.source_id);
    j.at("i").get_to(f.index);
}

void to_json(json& j, const UtteranceNode& n) {
    j = json{{"id", n.id},
             {"speaker", n.speaker},
             {"text", n.text},
             {"facts", n.support_facts},
             {"origin", to_string(n.origin)}};
}

void from_json(const json& j, UtteranceNode& n) {
    j.at("id").get_to(n.id);
    j.at("speaker").get_to(n.speaker);
    j.at("text").get_to(n.text);
    n.support_facts = j.value("facts", std::vector<FactRef>{});
    auto origin = origin_from_string(j.value("origin", std::string("gold")));
    if (!origin) throw Error(ErrorCode::parse_error, "unknown node origin in node '" + n.id + "'");
    n.origin = *origin;
}

void to_json(json& j, const Edge& e) { j = json{{"from", e.from}, {"to", e.to}, {"cond", e.conditioned}}; }

void from_json(const json& j, Edge& e) {
    j.at("from").get_to(e.from);
    j.at("to").get_to(e.to);
    e.conditioned = j.value("cond", false);
}

void to_json(json& j, const DialogueTree& t) {
    json nodes = json::array();
    for (const auto& [id, node] : t.nodes) nodes.push_back(node);
    j = json{{"start", t.start_id}, {"nodes", std::move(nodes)}, {"edges", t.edges}};
}

void from_json(const json& j, DialogueTree& t) {
    j.at("start").get_to(t.start_id);
    t.nodes.clear();
    for (const auto& jn : j.at("nodes")) {
        auto node = jn.get<UtteranceNode>();
        auto id = node.id;
        if (!t.nodes.emplace(id, std::move(node)).second)
            throw Error(ErrorCode::parse_error, "duplicate node id '" + id + "'");
    }
    t.edges = j.value("edges", std::vector<Edge>{});
}

void to_json(json& j, const Dialogue& d) { j = json{{"id", d.id}, {"spec", d.spec}, {"tree", d.tree}}; }

void from_json(const json& j, Dialogue& d) {
    j.at("id").get_to(d.id);
    j.at("spec").get_to(d.spec);
    j.at("tree").get_to(d.tree);
}

void to_json(json& j, const Corpus& c) {
    j = json{{"quests", c.quests}, {"dialogues", c.dialogues}};
    if (c.split_assignment) {
        json splits = json::object();
        for (const auto& [name, split] : *c.split_assignment) splits[name] = to_string(split);
        j["splits"] = std::move(splits);
    }
}

void from_json(const json& j, Corpus& c) {
    c.quests = j.value("quests", std::vector<QuestSpec>{});
    c.dialogues = j.value("dialogues", std::vector<Dialogue>{});
    c.split_assignment.reset();
    if (j.contains("splits")) {
        std::map<std::string, Split> splits;
        for (const auto& [name, value] : j.at("splits").items()) {
            auto s = split_from_string(value.get<std::string>());
            if (!s) throw Error(ErrorCode::parse_error, "unknown split for quest '" + name + "'");
            splits[name] = *s;
        }
        c.split_assignment = std::move(splits);
    }
}

void to_json(json& j, const Finding& f) {
    j = json{{"severity", f.severity == Severity::error ? "error" : "warning"},
             {"kind", f.kind},
             {"subject", f.subject},
             {"message", f.message}};
}

void to_json(json& j, const ValidationReport& r) { j = json{{"ok", r.ok()}, {"findings", r.findings}}; }

namespace {

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void to_json(json& j, const StatsReport& s) {
    j = json{{"dialogues", s.dialogue_count},
             {"nodes", s.node_count},
             {"npc_nodes", s.npc_node_count},
             {"annotated_nodes", s.annotated_node_count},
             {"annotated_npc_nodes", s.annotated_npc_node_count},
             {"npc_facts", s.npc_fact_count},
             {"quest_statements", s.quest_statement_count},
             {"bio_statements", s.bio_statement_count},
             {"annotated_fraction", optional_number(s.annotated_fraction)},
             {"npc_annotated_fraction", optional_number(s.npc_annotated_fraction)},
             {"mean_facts_per_npc_node", optional_number(s.mean_facts_per_npc_node)},
             {"mean_quest_statements", optional_number(s.mean_quest_statements)},
             {"mean_bio_statements", optional_number(s.mean_bio_statements)}};
}

std::string canonical(const json& j) { return j.dump(2) + "\n"; }

std::string canonical_json(const Corpus& corpus) { return canonical(json(corpus)); }

json parse_json(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("invalid JSON: ") + e.what());
    }
}

Corpus parse_corpus(const std::string& text) {
    auto j = parse_json(text);
    try {
        return j.get<Corpus>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("corpus schema: ") + e.what());
    }
}

DialogueSpec parse_spec(const json& j) {
    try {
        return j.get<DialogueSpec>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("dialogue spec schema: ") + e.what());
    }
}

Corpus load_corpus(const std::filesystem::path& path) { return parse_corpus(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::not_found, "cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::invalid_argument, "cannot write '" + path.string() + "'");
    out << content;
}

}  // namespace qw
