#include <doctest.h>

#include <set>

#include "fixtures.hpp"
#include "qw/corpus_json.hpp"
#include "qw/error.hpp"
#include "qw/prompting.hpp"
#include "qw/synthetic.hpp"
#include "qw/tokenizer.hpp"

using namespace qw;

namespace {

GenerationTask task_for(const Dialogue& d, const std::string& target) {
    for (auto& t : build_nup_items(d.tree, d.spec, 1, 0, d.id))
        if (t.gold_target->id == target) return t;
    throw std::runtime_error("no such target");
}

std::size_t count_occurrences(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

std::vector<Dialogue> pool_of(std::size_t n, std::uint64_t seed) {
    std::vector<Dialogue> pool;
    for (std::size_t i = 0; i < n; ++i)
        pool.push_back(synthetic::random_dialogue(seed + i, "pool-" + std::to_string(i),
                                                  synthetic::random_spec(seed * 31 + i, "q" + std::to_string(i))));
    return pool;
}

std::string golden(const char* name) { return read_file(std::string(QW_GOLDEN_DIR) + "/" + name); }

}  // namespace

TEST_CASE("full task block matches the golden file") {
    auto task = task_for(fx::agnes_dialogue(), "p3");
    PromptConfig config;
    config.mode = PromptMode::full;
    CHECK(render_task_block(task, config) == golden("task_full.txt"));
}

TEST_CASE("oracle knowledge-selection task block matches the golden file") {
    auto task = task_for(fx::agnes_dialogue(), "p3");
    task.gold_facts = std::vector<FactRef>{{"walk:hunt", 0}};
    PromptConfig config;
    config.mode = PromptMode::ks_oracle;
    CHECK(render_task_block(task, config) == golden("task_ks_oracle.txt"));
}

TEST_CASE("vanilla mode renders only participants and dialog") {
    auto d = fx::agnes_dialogue();
    auto text = render_dialogue_block(d.spec, {d.tree.node("start")}, PromptMode::vanilla);
    CHECK(text == "DIALOG PARTICIPANTS:\nPlayer, Agnes Needham\n\nDIALOG:\n> Agnes Needham: Oh, a traveller! Please, I need help.\n");
}

TEST_CASE("empty history keeps the dialog header") {
    auto text = render_dialogue_block(fx::agnes_spec(), {}, PromptMode::full);
    const std::string tail = "DIALOG:\n";
    REQUIRE(text.size() >= tail.size());
    CHECK(text.substr(text.size() - tail.size()) == tail);
}

TEST_CASE("section presence grows with the mode") {
    auto d = fx::agnes_dialogue();
    std::vector<UtteranceNode> h{d.tree.node("start")};
    auto sections = [&](PromptMode m) {
        std::set<std::string> s;
        auto text = render_dialogue_block(d.spec, h, m);
        for (auto header : {"FACTS:", "DIALOG CONTEXT:", "KNOW BY THE END OF THE DIALOG:", "DIALOG PARTICIPANTS:", "DIALOG:"})
            if (text.find(std::string(header) + "\n") != std::string::npos) s.insert(header);
        return s;
    };
    auto v = sections(PromptMode::vanilla), q = sections(PromptMode::quest_only), f = sections(PromptMode::full);
    CHECK(v.size() == 2);
    CHECK(q.size() == 4);
    CHECK(f.size() == 5);
    CHECK(std::includes(q.begin(), q.end(), v.begin(), v.end()));
    CHECK(std::includes(f.begin(), f.end(), q.begin(), q.end()));
}

TEST_CASE("knowledge-selection history fact lines") {
    auto d = fx::agnes_dialogue();
    const auto& a2 = d.tree.node("a2");
    const auto& a4 = d.tree.node("a4");
    auto two = build_ks_history(d.spec, {a2}, {{"a2", a2.support_facts}});
    CHECK(count_occurrences(two, " fact: ") == 2);
    CHECK(two.find("utterance: > Agnes Needham:") > two.rfind(" fact: "));

    auto bare = build_ks_history(d.spec, {a4}, {});
    CHECK(bare == "utterance: > Agnes Needham: Never mind, then.\n");

    CHECK_THROWS_AS(build_ks_history(d.spec, {a4}, {{"a4", {{"bio:Raptidon", 9}}}}), Error);
}

TEST_CASE("fact-line count equals the annotation count on synthetic dialogues") {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        auto d = synthetic::random_dialogue(seed, "d", synthetic::random_spec(seed, "q"));
        std::vector<UtteranceNode> history;
        std::size_t expected = 0;
        for (const auto& id : linearize_full(d.tree).ids) {
            history.push_back(d.tree.node(id));
            expected += history.back().support_facts.size();
        }
        auto text = render_dialogue_block(d.spec, history, PromptMode::ks);
        CHECK(count_occurrences(text, " fact: ") == expected);
        CHECK(count_occurrences(text, "utterance: > ") == history.size());
    }
}

TEST_CASE("oracle and one-fact selection") {
    auto task = task_for(fx::agnes_dialogue(), "a2");
    REQUIRE(task.gold_facts);
    CHECK(select_oracle_facts(task) == *task.gold_facts);

    task.gold_facts = std::vector<FactRef>{{"log:hunt", 0}};
    for (std::uint64_t s = 0; s < 20; ++s) CHECK(sample_one_fact(task, s) == FactRef{"log:hunt", 0});

    task.gold_facts = std::vector<FactRef>{{"log:hunt", 0}, {"log:hunt", 1}, {"bio:Raptidon", 0}, {"bio:Raptidon", 1}};
    std::set<FactRef> seen;
    for (std::uint64_t s = 0; s < 400; ++s) seen.insert(sample_one_fact(task, s));
    CHECK(seen.size() == 4);
    CHECK(sample_one_fact(task, 17) == sample_one_fact(task, 17));

    task.gold_facts = std::vector<FactRef>{};
    CHECK_THROWS_AS(sample_one_fact(task, 0), Error);
}

TEST_CASE("huge budget takes every exemplar") {
    auto pool = pool_of(2, 100);
    auto index = build_exemplar_index(pool);
    auto task = task_for(fx::agnes_dialogue(), "p3");
    PromptConfig config;
    config.token_budget = 1'000'000;
    auto p = build_icl_prompt(task, config, &index, pool);
    CHECK(p.num_exemplars == 2);
    CHECK_FALSE(p.partial_leading_exemplar);
    CHECK(p.token_count == count_tokens(p.text));
    CHECK(p.text.find(render_task_block(task, config)) == p.text.size() - render_task_block(task, config).size());
}

TEST_CASE("budget barely above the task block takes no exemplar") {
    auto pool = pool_of(3, 200);
    auto index = build_exemplar_index(pool);
    auto task = task_for(fx::agnes_dialogue(), "p3");
    PromptConfig config;
    config.token_budget = count_tokens(render_task_block(task, config)) + 1;
    auto p = build_icl_prompt(task, config, &index, pool);
    CHECK(p.num_exemplars == 0);
    CHECK_FALSE(p.truncated);
    CHECK_FALSE(p.partial_leading_exemplar);
    CHECK(p.text == render_task_block(task, config));
}

TEST_CASE("budget between k and k+1 exemplars adds one partial exemplar") {
    auto pool = pool_of(2, 300);
    auto index = build_exemplar_index(pool);
    auto task = task_for(fx::agnes_dialogue(), "p3");
    PromptConfig config;
    const auto task_tokens = count_tokens(render_task_block(task, config));
    const auto sep_tokens = count_tokens(std::string(prompt_format::exemplar_separator));
    auto ranked = retrieve_exemplars(index, task.spec, pool.size());
    auto tokens_of = [&](const std::string& id) {
        for (const auto& d : pool)
            if (d.id == id) return count_tokens(render_exemplar(d, config.mode));
        return std::size_t{0};
    };
    const auto first = tokens_of(ranked[0].id) + sep_tokens;
    const auto second = tokens_of(ranked[1].id) + sep_tokens;
    config.token_budget = task_tokens + first + second / 2;

    auto p = build_icl_prompt(task, config, &index, pool);
    CHECK(p.num_exemplars == 1);
    CHECK(p.exemplar_ids == std::vector<std::string>{ranked[0].id});
    CHECK(p.partial_leading_exemplar);
    CHECK(p.token_count == count_tokens(p.text));
    CHECK(p.token_count <= config.token_budget);
    CHECK(p.partial_exemplar_id == ranked[1].id);
}

TEST_CASE("the task's own dialogue is never an exemplar") {
    auto d = fx::agnes_dialogue();
    std::vector<Dialogue> pool{d};
    auto more = pool_of(1, 400);
    pool.push_back(more[0]);
    auto index = build_exemplar_index(pool);
    auto task = task_for(d, "p3");
    PromptConfig config;
    config.token_budget = 1'000'000;
    auto p = build_icl_prompt(task, config, &index, pool);
    CHECK(p.exemplar_ids == std::vector<std::string>{more[0].id});
}

TEST_CASE("oversized task blocks are trimmed and then rejected") {
    auto task = task_for(fx::agnes_dialogue(), "p3");
    PromptConfig config;
    const auto full = count_tokens(render_task_block(task, config));
    config.token_budget = full - 5;
    auto p = build_icl_prompt(task, config, nullptr, {});
    CHECK(p.truncated);
    CHECK(p.token_count <= config.token_budget);
    CHECK(p.text.find("Raptidons are large flightless birds.") == std::string::npos);
    CHECK(p.text.find("Agnes Needham is a farmer") != std::string::npos);

    config.token_budget = 10;
    try {
        build_icl_prompt(task, config, nullptr, {});
        FAIL("expected overflow");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::overflow);
    }
}

TEST_CASE("prompt rendering is deterministic") {
    auto pool = pool_of(5, 500);
    auto index = build_exemplar_index(pool);
    auto task = task_for(fx::agnes_dialogue(), "p3");
    PromptConfig config;
    config.token_budget = 700;
    CHECK(build_icl_prompt(task, config, &index, pool).text == build_icl_prompt(task, config, &index, pool).text);
}

TEST_CASE("sequence-to-sequence source order") {
    auto task = task_for(fx::agnes_dialogue(), "p3");
    auto src = build_sl_source(task, 10'000);
    const auto bio = src.find("Raptidons are large");
    const auto quest = src.find("It nests in the hills.</s>");
    const auto part = src.find("DIALOG PARTICIPANTS:");
    const auto hist = src.find("> Player: What is the matter?");
    CHECK(bio < quest);
    CHECK(quest < part);
    CHECK(part < hist);
    CHECK(src.find("Agnes Needham</s> Agnes Needham is a farmer") != std::string::npos);
}

TEST_CASE("sequence-to-sequence window drops non-participant biographies first") {
    auto task = task_for(fx::agnes_dialogue(), "p3");
    const auto full = count_tokens(build_sl_source(task, 10'000));
    auto src = build_sl_source(task, full - 1);
    CHECK(count_tokens(src) <= full - 1);
    CHECK(src.find("Raptidons are large") == std::string::npos);
    CHECK(src.find("Agnes Needham is a farmer") != std::string::npos);

    auto tiny = build_sl_source(task, 12);
    CHECK(count_tokens(tiny) <= 12);
    CHECK(tiny.find("hills.</s>") != std::string::npos);
}

TEST_CASE("sequence-to-sequence targets round-trip") {
    auto task = task_for(fx::agnes_dialogue(), "a2");
    REQUIRE(task.gold_facts->size() == 2);
    auto target = build_sl_target(task, true);
    CHECK(target ==
          "Agnes Needham fact: Agnes lost three hens last week., Hunt the Raptidon fact: It nests in the hills. "
          "> Agnes Needham: A Raptidon took my hens. It nests in the hills.</s>");
    auto parsed = parse_sl_target(task.spec, target);
    CHECK(parsed.facts == *task.gold_facts);
    CHECK(parsed.speaker == "Agnes Needham");
    CHECK(parsed.text == "A Raptidon took my hens. It nests in the hills.");

    CHECK(build_sl_target(task, false) == "> Agnes Needham: A Raptidon took my hens. It nests in the hills.</s>");
}

TEST_CASE("prompt config validation") {
    PromptConfig c;
    c.token_budget = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c.token_budget = 10;
    c.tokenizer_id = "missing";
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK(prompt_mode_from_string("ks_oracle") == PromptMode::ks_oracle);
    CHECK_FALSE(prompt_mode_from_string("bogus"));
}
