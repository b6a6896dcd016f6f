#include <csignal>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "qw/corpus_json.hpp"
#include "qw/error.hpp"
#include "qw/evaluation.hpp"
#include "qw/linearizer.hpp"
#include "qw/pipeline.hpp"
#include "qw/prompting.hpp"
#include "qw/retrieval.hpp"
#include "qw/service.hpp"
#include "qw/synthetic.hpp"
#include "qw/tokenizer.hpp"
#include "qw/writer.hpp"

namespace {

using qw::json;

constexpr int exit_ok = 0;
constexpr int exit_findings = 1;
constexpr int exit_usage = 2;

struct Globals {
    bool json_errors = false;
    std::string out;
};

Globals globals;

void emit(const std::string& text) {
    if (globals.out.empty()) {
        std::cout << text;
        std::cout.flush();
    } else {
        qw::write_file(globals.out, text);
    }
}

void report_error(const std::string& code, const std::string& message, int exit_code) {
    if (globals.json_errors) {
        std::cerr << json{{"code", code}, {"message", message}, {"exit", exit_code}}.dump() << "\n";
    } else {
        std::cerr << "error: " << message << "\n";
    }
}

std::shared_ptr<qw::LmBackend> make_backend(const std::string& name, qw::PromptMode mode) {
    if (name == "mock") return std::make_shared<qw::MockBackend>(qw::MockBackend::Options{qw::is_ks(mode)});
    if (name == "http") return std::make_shared<qw::HttpBackend>(qw::HttpBackend::options_from_env());
    throw qw::Error(qw::ErrorCode::invalid_argument, "unknown backend '" + name + "' (expected mock or http)");
}

qw::PromptMode parse_mode(const std::string& s) {
    auto m = qw::prompt_mode_from_string(s);
    if (!m) throw qw::Error(qw::ErrorCode::invalid_argument, "unknown prompt mode '" + s + "'");
    return *m;
}

const qw::Dialogue& find_dialogue(const qw::Corpus& c, const std::string& id) {
    const auto* d = c.find_dialogue(id);
    if (!d) throw qw::Error(qw::ErrorCode::not_found, "unknown dialogue '" + id + "'");
    return *d;
}

qw::GenerationTask task_for_node(const qw::Dialogue& d, const std::string& node, std::uint64_t seed) {
    for (auto& t : qw::build_nup_items(d.tree, d.spec, 1, seed, d.id))
        if (t.gold_target && t.gold_target->id == node) return t;
    throw qw::Error(qw::ErrorCode::not_found,
                    "node '" + node + "' is not a generation target of '" + d.id + "' (unknown, start or unreachable)");
}

// Few-shot pool: explicit --pool corpus, else the train split of the input
// corpus (or all of it).
struct Pool {
    std::vector<qw::Dialogue> dialogues;
    std::optional<qw::Bm25Index> index;

    const qw::Bm25Index* index_ptr() const { return index ? &*index : nullptr; }
};

Pool load_pool(const std::string& pool_path, const qw::Corpus* fallback) {
    Pool p;
    if (!pool_path.empty()) {
        p.dialogues = qw::exemplar_pool(qw::load_corpus(pool_path));
    } else if (fallback) {
        p.dialogues = qw::exemplar_pool(*fallback);
    }
    if (!p.dialogues.empty()) p.index = qw::build_exemplar_index(p.dialogues);
    return p;
}

json candidate_json(const qw::DialogueSpec& spec, const qw::Candidate& c) {
    json facts = json::array();
    for (const auto& f : c.selected_facts) {
        json x = {{"line", f.raw_line}};
        if (f.ref) {
            x["source"] = f.ref->source_id;
            x["i"] = f.ref->index;
            x["text"] = qw::resolve_fact(spec, *f.ref).text;
        }
        facts.push_back(std::move(x));
    }
    return {{"speaker", c.speaker}, {"text", c.text}, {"facts", facts}, {"raw", c.raw}, {"warnings", c.warnings}};
}

struct PromptFlags {
    std::string mode = "full";
    std::size_t budget = qw::default_icl_budget;
    std::string tokenizer = "default";
    bool no_few_shot = false;
    std::string pool;

    void add_to(CLI::App* sub) {
        sub->add_option("--mode", mode, "vanilla | quest_only | full | ks | ks_one_fact | ks_oracle");
        sub->add_option("--budget", budget, "prompt token budget");
        sub->add_option("--tokenizer", tokenizer, "token counter id");
        sub->add_flag("--no-few-shot", no_few_shot, "disable exemplars");
        sub->add_option("--pool", pool, "corpus supplying few-shot exemplars");
    }

    qw::PromptConfig config(std::uint64_t seed) const {
        qw::PromptConfig c;
        c.mode = parse_mode(mode);
        c.token_budget = budget;
        c.tokenizer_id = tokenizer;
        c.allow_few_shot = !no_few_shot;
        c.seed = seed;
        c.validate();
        return c;
    }
};

std::sig_atomic_t volatile stop_requested = 0;
qw::HttpServer* active_server = nullptr;

extern "C" void on_signal(int) {
    stop_requested = 1;
    if (active_server) active_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quest dialogue writer toolkit"};
    app.require_subcommand(1);
    app.add_flag("--json-errors", globals.json_errors, "machine-readable errors on stderr");
    app.add_option("--out", globals.out, "write output to a file instead of stdout");

    std::function<int()> action;

    // validate
    std::string corpus_path;
    auto* validate = app.add_subcommand("validate", "check a corpus document");
    validate->add_option("corpus", corpus_path, "corpus JSON")->required();
    validate->callback([&] {
        action = [&] {
            auto c = qw::load_corpus(corpus_path);
            auto r = qw::validate_corpus(c);
            emit(qw::canonical(json{{"ok", r.ok()}, {"report", r}}));
            return r.findings.empty() ? exit_ok : exit_findings;
        };
    });

    // stats
    auto* stats = app.add_subcommand("stats", "corpus statistics");
    stats->add_option("corpus", corpus_path, "corpus JSON")->required();
    stats->callback([&] {
        action = [&] {
            emit(qw::canonical(json(qw::corpus_stats(qw::load_corpus(corpus_path)))));
            return exit_ok;
        };
    });

    // split
    std::size_t n_train = 0, n_dev = 0, n_test = 0;
    std::uint64_t seed = 0;
    bool with_corpus = false;
    auto* split = app.add_subcommand("split", "assign quests to train/dev/test");
    split->add_option("corpus", corpus_path, "corpus JSON")->required();
    split->add_option("--train", n_train)->required();
    split->add_option("--dev", n_dev)->required();
    split->add_option("--test", n_test)->required();
    split->add_option("--seed", seed);
    split->add_flag("--with-corpus", with_corpus, "emit the whole corpus with the assignment attached");
    split->callback([&] {
        action = [&] {
            auto c = qw::split_by_quests(qw::load_corpus(corpus_path), {n_train, n_dev, n_test}, seed);
            if (with_corpus) {
                emit(qw::canonical_json(c));
            } else {
                json a = json::object();
                for (const auto& [q, s] : *c.split_assignment) a[q] = qw::to_string(s);
                emit(qw::canonical(a));
            }
            return exit_ok;
        };
    });

    // linearize
    std::string dialogue_id, node_id;
    std::size_t search_budget = qw::default_search_budget;
    bool full = false;
    auto* linearize = app.add_subcommand("linearize", "longest edge-simple history to a node");
    linearize->add_option("corpus", corpus_path, "corpus JSON")->required();
    linearize->add_option("--dialogue", dialogue_id)->required();
    linearize->add_option("--node", node_id, "target node (omit with --full)");
    linearize->add_option("--search-budget", search_budget);
    linearize->add_flag("--full", full, "best linearization over all end nodes");
    linearize->callback([&] {
        action = [&] {
            auto c = qw::load_corpus(corpus_path);
            const auto& d = find_dialogue(c, dialogue_id);
            if (!full && node_id.empty()) throw qw::Error(qw::ErrorCode::invalid_argument, "--node or --full is required");
            auto h = full ? qw::linearize_full(d.tree, search_budget) : qw::linearize(d.tree, node_id, search_budget);
            emit(qw::canonical(json{{"ids", h.ids}, {"budget_truncated", h.budget_truncated}}));
            return exit_ok;
        };
    });

    // prompt
    PromptFlags pflags;
    bool raw_text = false, sl = false, ks_target = false;
    std::size_t window = qw::default_sl_window;
    auto* prompt = app.add_subcommand("prompt", "build the prompt for one next-utterance item");
    prompt->add_option("corpus", corpus_path, "corpus JSON")->required();
    prompt->add_option("--dialogue", dialogue_id)->required();
    prompt->add_option("--node", node_id, "gold target node")->required();
    prompt->add_option("--seed", seed);
    prompt->add_flag("--text", raw_text, "print the prompt text; token count goes to stderr");
    prompt->add_flag("--sl", sl, "sequence-to-sequence source/target instead of a few-shot prompt");
    prompt->add_flag("--ks-target", ks_target, "with --sl: prefix the target with its facts");
    prompt->add_option("--window", window, "with --sl: source window in tokens");
    pflags.add_to(prompt);
    prompt->callback([&] {
        action = [&] {
            auto c = qw::load_corpus(corpus_path);
            auto task = task_for_node(find_dialogue(c, dialogue_id), node_id, seed);
            if (sl) {
                auto src = qw::build_sl_source(task, window);
                emit(qw::canonical(json{{"source", src},
                                        {"source_tokens", qw::count_tokens(src)},
                                        {"target", qw::build_sl_target(task, ks_target)}}));
                return exit_ok;
            }
            auto pool = load_pool(pflags.pool, &c);
            auto p = qw::build_icl_prompt(task, pflags.config(seed), pool.index_ptr(), pool.dialogues);
            if (raw_text) {
                emit(p.text + "\n");
                std::cerr << "tokens: " << p.token_count << "\n";
            } else {
                json j = {{"text", p.text},
                          {"token_count", p.token_count},
                          {"num_exemplars", p.num_exemplars},
                          {"exemplar_ids", p.exemplar_ids},
                          {"truncated", p.truncated},
                          {"partial_leading_exemplar", p.partial_leading_exemplar},
                          {"partial_exemplar_id", p.partial_exemplar_id ? json(*p.partial_exemplar_id) : json()}};
                emit(qw::canonical(j));
            }
            return exit_ok;
        };
    });

    // nup
    std::string task_path, backend_name = "mock";
    std::size_t k = 3, jobs = 1;
    double temperature = 0.7;
    PromptFlags nflags;
    auto* nup = app.add_subcommand("nup", "generate next-utterance candidates");
    nup->add_option("corpus", corpus_path, "corpus JSON (with --dialogue/--node)");
    nup->add_option("--task", task_path, "task file {\"dialogue\": ..., \"target\": node id}");
    nup->add_option("--dialogue", dialogue_id);
    nup->add_option("--node", node_id);
    nup->add_option("--k", k, "candidates");
    nup->add_option("--backend", backend_name, "mock | http");
    nup->add_option("--seed", seed);
    nup->add_option("--jobs", jobs, "concurrent completions");
    nup->add_option("--temperature", temperature);
    nflags.add_to(nup);
    nup->callback([&] {
        action = [&] {
            qw::GenerationTask task;
            std::optional<qw::Corpus> c;
            if (!task_path.empty()) {
                auto j = qw::parse_json(qw::read_file(task_path));
                qw::Dialogue d;
                try {
                    d = j.at("dialogue").get<qw::Dialogue>();
                    node_id = j.at("target").get<std::string>();
                } catch (const json::exception& e) {
                    throw qw::Error(qw::ErrorCode::parse_error, std::string("malformed task file: ") + e.what());
                }
                task = task_for_node(d, node_id, seed);
            } else {
                if (corpus_path.empty() || dialogue_id.empty() || node_id.empty())
                    throw qw::Error(qw::ErrorCode::invalid_argument, "give --task or a corpus with --dialogue and --node");
                c = qw::load_corpus(corpus_path);
                task = task_for_node(find_dialogue(*c, dialogue_id), node_id, seed);
            }
            auto config = nflags.config(seed);
            auto backend = make_backend(backend_name, config.mode);
            auto pool = load_pool(nflags.pool, c ? &*c : nullptr);
            qw::GenerationOptions gen;
            gen.pool = &pool.dialogues;
            gen.index = pool.index_ptr();
            gen.decode.temperature = temperature;
            gen.jobs = jobs;
            auto candidates = qw::generate_candidates(task, config, k, *backend, gen);
            json out = json::array();
            for (const auto& cand : candidates) out.push_back(candidate_json(task.spec, cand));
            emit(qw::canonical(json{{"item_id", task.item_id}, {"candidates", out}}));
            return exit_ok;
        };
    });

    // spine
    std::string spec_path, start_speaker, start_text;
    std::size_t rounds = 10;
    bool summary = false;
    PromptFlags sflags;
    auto* spine = app.add_subcommand("spine", "grow a dialogue from one starting utterance");
    spine->add_option("--spec", spec_path, "spec JSON (default: a synthetic spec)");
    spine->add_option("--start-speaker", start_speaker);
    spine->add_option("--start-text", start_text);
    spine->add_option("--rounds", rounds);
    spine->add_option("--k", k);
    spine->add_option("--backend", backend_name, "mock | http");
    spine->add_option("--seed", seed);
    spine->add_option("--jobs", jobs);
    spine->add_option("--id", dialogue_id, "dialogue id in the export");
    spine->add_flag("--summary", summary, "print node and path counts to stderr");
    sflags.add_to(spine);
    spine->callback([&] {
        action = [&] {
            auto spec = spec_path.empty() ? qw::synthetic::random_spec(seed, "demo-quest")
                                          : qw::parse_spec(qw::parse_json(qw::read_file(spec_path)));
            auto findings = qw::validate_spec(spec);
            if (!findings.ok()) {
                std::cerr << qw::canonical(json(findings));
                return exit_findings;
            }
            qw::UtteranceNode start;
            start.id = "start";
            start.speaker = start_speaker.empty() ? spec.npc_names().empty() ? spec.participants.front().name
                                                                             : spec.npc_names().front()
                                                  : start_speaker;
            start.text = start_text.empty() ? "Ah, a traveller. I could use a hand with something." : start_text;
            auto config = sflags.config(seed);
            auto backend = make_backend(backend_name, config.mode);
            auto pool = load_pool(sflags.pool, nullptr);
            qw::GenerationOptions gen;
            gen.pool = &pool.dialogues;
            gen.index = pool.index_ptr();
            gen.jobs = jobs;
            auto result = qw::generate_spine(spec, start, rounds, k, config, qw::CommitPolicy::seeded_random(seed),
                                             *backend, gen);
            emit(qw::canonical_json(qw::export_spine(spec, result.tree, dialogue_id.empty() ? "spine" : dialogue_id)));
            if (summary || result.partial) {
                std::cerr << "nodes: " << result.tree.nodes.size() << " path: " << result.committed_path.size()
                          << " rounds: " << result.rounds << "\n";
                if (result.partial) std::cerr << "partial: " << result.partial_reason << "\n";
            }
            return exit_ok;
        };
    });

    // eval
    std::string split_name, judgments_path, scorer_url;
    std::size_t limit = 0, resamples = 1000, variants = 1;
    double level = 0.95;
    bool table = false;
    PromptFlags eflags;
    auto* eval = app.add_subcommand("eval", "next-utterance evaluation or judgment aggregation");
    eval->add_option("corpus", corpus_path, "corpus JSON");
    eval->add_option("--judgments", judgments_path, "aggregate human judgments (.csv or .json) instead");
    eval->add_option("--split", split_name, "train | dev | test (default: all dialogues)");
    eval->add_option("--limit", limit, "first N items only");
    eval->add_option("--variants", variants, "histories per target node");
    eval->add_option("--backend", backend_name, "mock | http");
    eval->add_option("--seed", seed);
    eval->add_option("--jobs", jobs);
    eval->add_option("--resamples", resamples);
    eval->add_option("--level", level);
    eval->add_option("--scorer-url", scorer_url, "external semantic scorer base URL");
    eval->add_flag("--table", table, "plain-text table instead of JSON");
    eflags.add_to(eval);
    eval->callback([&] {
        action = [&] {
            if (!judgments_path.empty()) {
                auto text = qw::read_file(judgments_path);
                auto records = judgments_path.size() >= 4 && judgments_path.substr(judgments_path.size() - 4) == ".csv"
                                   ? qw::parse_judgments_csv(text)
                                   : qw::parse_judgments_json(qw::parse_json(text));
                std::vector<qw::JudgmentRecord> likert, pairwise;
                for (auto& r : records)
                    (r.kind == qw::JudgmentRecord::Kind::likert ? likert : pairwise).push_back(r);
                emit(qw::canonical(json{{"likert", qw::likert_json(qw::likert_aggregate(likert, resamples, level, seed))},
                                        {"pairwise", qw::winrate_json(qw::pairwise_winrates(pairwise))}}));
                return exit_ok;
            }
            if (corpus_path.empty()) throw qw::Error(qw::ErrorCode::invalid_argument, "eval needs a corpus or --judgments");
            auto c = qw::load_corpus(corpus_path);
            std::optional<qw::Split> split_sel;
            if (!split_name.empty()) {
                split_sel = qw::split_from_string(split_name);
                if (!split_sel) throw qw::Error(qw::ErrorCode::invalid_argument, "unknown split '" + split_name + "'");
            }
            auto tasks = qw::nup_tasks(c, split_sel, variants, seed);
            if (limit && tasks.size() > limit) tasks.resize(limit);
            qw::NupRunOptions run;
            run.config = eflags.config(seed);
            run.jobs = jobs;
            auto backend = make_backend(backend_name, run.config.mode);
            auto pool = load_pool(eflags.pool, &c);
            auto results = qw::run_nup(tasks, *backend, pool.dialogues, pool.index_ptr(), run);
            std::unique_ptr<qw::HttpScorer> scorer;
            if (!scorer_url.empty()) scorer = std::make_unique<qw::HttpScorer>(scorer_url);
            qw::EvalOptions opts;
            opts.resamples = resamples;
            opts.level = level;
            opts.seed = seed;
            opts.jobs = jobs;
            auto report = qw::evaluate_nup(results, scorer.get(), opts);
            emit(table ? qw::render_table(report) : qw::canonical(json(report)));
            return exit_ok;
        };
    });

    // agree
    std::string a_path, b_path;
    auto* agree = app.add_subcommand("agree", "fact annotation agreement between two annotators");
    agree->add_option("a", a_path, "annotations or corpus JSON")->required();
    agree->add_option("b", b_path, "annotations or corpus JSON")->required();
    agree->callback([&] {
        action = [&] {
            auto a = qw::parse_annotations(qw::parse_json(qw::read_file(a_path)));
            auto b = qw::parse_annotations(qw::parse_json(qw::read_file(b_path)));
            auto r = qw::annotation_agreement(a, b);
            emit(qw::canonical(json{{"nodes", r.nodes}, {"em_avg", r.em_avg}, {"jaccard_avg", r.jaccard_avg}}));
            return exit_ok;
        };
    });

    // synth
    std::size_t quests = 45, per_quest = 1;
    auto* synth = app.add_subcommand("synth", "write a synthetic corpus");
    synth->add_option("--quests", quests);
    synth->add_option("--per-quest", per_quest);
    synth->add_option("--seed", seed);
    synth->callback([&] {
        action = [&] {
            emit(qw::canonical_json(qw::synthetic::corpus(seed, quests, per_quest)));
            return exit_ok;
        };
    });

    // serve
    std::string host = "127.0.0.1", snapshot_dir, cors_origin = "*";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "start the authoring HTTP service");
    serve->add_option("--host", host);
    serve->add_option("--port", port, "0 picks a free port");
    serve->add_option("--backend", backend_name, "mock | http");
    serve->add_option("--pool", eflags.pool, "corpus supplying few-shot exemplars");
    serve->add_option("--snapshot-dir", snapshot_dir);
    serve->add_option("--cors-origin", cors_origin);
    serve->add_option("--jobs", jobs);
    serve->callback([&] {
        action = [&] {
            auto pool = load_pool(eflags.pool, nullptr);
            qw::ServiceOptions opts;
            opts.backend = make_backend(backend_name, qw::PromptMode::full);
            if (backend_name == "mock") opts.backend = std::make_shared<qw::MockBackend>();
            opts.pool = &pool.dialogues;
            opts.index = pool.index_ptr();
            opts.jobs = jobs;
            opts.cors_origin = cors_origin;
            if (!snapshot_dir.empty()) opts.snapshot_dir = snapshot_dir;
            qw::Service service(opts);
            qw::HttpServer server(service);
            const int bound = server.bind(host, port);
            std::cerr << "listening on " << host << ":" << bound << "\n";
            active_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            server.run();
            active_server = nullptr;
            return exit_ok;
        };
    });

    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        report_error("usage", e.what(), exit_usage);
        return exit_usage;
    }

    try {
        return action();
    } catch (const qw::Error& e) {
        const bool usage = e.code() == qw::ErrorCode::invalid_argument || e.code() == qw::ErrorCode::not_found;
        const int code = usage ? exit_usage : exit_findings;
        report_error(qw::to_string(e.code()), e.what(), code);
        return code;
    } catch (const std::exception& e) {
        report_error("internal", e.what(), exit_findings);
        return exit_findings;
    }
}
