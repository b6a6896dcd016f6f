#include "qw/writer.hpp"

#include <algorithm>
#include <cstdio>
#include <exception>
#include <mutex>
#include <thread>

#include "qw/error.hpp"
#include "qw/rng.hpp"
#include "qw/text.hpp"

namespace qw {

namespace {

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

// Speaker of an utterance line ("> S: t" or "utterance: > S: t"), if any.
std::optional<std::string> utterance_speaker(std::string_view line) {
    if (starts_with(line, prompt_format::utterance_label)) line.remove_prefix(prompt_format::utterance_label.size());
    if (!starts_with(line, prompt_format::utterance_marker)) return std::nullopt;
    line.remove_prefix(prompt_format::utterance_marker.size());
    auto colon = line.find(": ");
    if (colon == std::string_view::npos) return std::nullopt;
    return std::string(line.substr(0, colon));
}

struct MockView {
    std::vector<std::string> participants;
    std::optional<std::string> last_speaker;
    std::vector<std::pair<std::string, std::string>> facts;  // (label, sentence)
    bool ks_history = false;
};

MockView read_prompt(const std::string& prompt) {
    MockView v;
    std::string_view block = prompt;
    auto sep = block.rfind(prompt_format::exemplar_separator);
    if (sep != std::string_view::npos) block.remove_prefix(sep + prompt_format::exemplar_separator.size());
    auto lines = text::split_lines(block);

    enum class Section { none, facts, participants, dialog, other } section = Section::none;
    std::string label;
    for (const auto& line : lines) {
        if (line == prompt_format::facts_header) {
            section = Section::facts;
            continue;
        }
        if (line == prompt_format::participants_header) {
            section = Section::participants;
            continue;
        }
        if (line == prompt_format::dialog_header) {
            section = Section::dialog;
            continue;
        }
        if (line == prompt_format::context_header || line == prompt_format::know_header) {
            section = Section::other;
            continue;
        }
        switch (section) {
            case Section::facts:
                if (line.empty()) break;
                if (starts_with(line, prompt_format::indent)) {
                    v.facts.emplace_back(label, line.substr(prompt_format::indent.size()));
                } else {
                    label = line;
                }
                break;
            case Section::participants:
                if (!line.empty() && v.participants.empty()) {
                    std::string_view rest = line;
                    while (!rest.empty()) {
                        auto comma = rest.find(", ");
                        v.participants.emplace_back(rest.substr(0, comma));
                        if (comma == std::string_view::npos) break;
                        rest.remove_prefix(comma + 2);
                    }
                }
                break;
            case Section::dialog:
                if (starts_with(line, prompt_format::utterance_label)) v.ks_history = true;
                if (auto s = utterance_speaker(line)) v.last_speaker = *s;
                break;
            default:
                break;
        }
    }
    return v;
}

constexpr const char* mock_openers[] = {
    "Listen closely.", "Here is what I know:", "Don't forget this:", "Think about it.", "I'll tell you plainly:",
};

}  // namespace

std::string MockBackend::complete(const std::string& prompt, const CompletionParams& params) {
    Rng rng(fnv1a(prompt) ^ Rng::mix(params.seed.value_or(0)));
    const auto view = read_prompt(prompt);

    std::string speaker = view.participants.empty() ? "Player" : view.participants.front();
    for (const auto& p : view.participants) {
        if (!view.last_speaker || p != *view.last_speaker) {
            speaker = p;
            break;
        }
    }

    std::string body = mock_openers[rng.index(std::size(mock_openers))];
    std::vector<std::size_t> chosen;
    if (!view.facts.empty()) {
        chosen.push_back(rng.index(view.facts.size()));
        if (view.facts.size() > 1 && rng.index(2) == 1) {
            auto second = rng.index(view.facts.size());
            if (second != chosen.front()) chosen.push_back(second);
        }
        body += " " + view.facts[chosen.front()].second;
    } else {
        body += " Let's keep talking.";
    }

    const bool ks = options_.ks.value_or(view.ks_history);
    std::string out;
    if (ks) {
        for (auto i : chosen)
            out += view.facts[i].first + std::string(prompt_format::fact_infix) + view.facts[i].second + "\n";
        out += std::string(prompt_format::utterance_label);
    }
    out += std::string(prompt_format::utterance_marker) + speaker + ": " + body;
    return out;
}

std::string ScriptedBackend::complete(const std::string&, const CompletionParams&) {
    if (responses_.empty()) throw Error(ErrorCode::backend_failure, "scripted backend has no responses");
    auto i = calls_.fetch_add(1);
    return responses_[i % responses_.size()];
}

std::vector<FactRef> Candidate::resolved_facts() const {
    std::vector<FactRef> out;
    for (const auto& f : selected_facts)
        if (f.ref) out.push_back(*f.ref);
    return out;
}

namespace {

std::optional<FactRef> match_fact(const DialogueSpec& spec, std::string_view label, std::string_view sentence) {
    std::vector<const Statement*> all = quest_statements(spec);
    for (const auto* s : bio_statements(spec)) all.push_back(s);
    auto ref_of = [](const Statement* s) { return FactRef{s->source_id, s->index}; };

    for (const auto* s : all)
        if (s->text == sentence && fact_label(spec, ref_of(s)) == label) return ref_of(s);
    for (const auto* s : all)
        if (s->text == sentence) return ref_of(s);
    const auto wanted = text::normalize(sentence);
    for (const auto* s : all)
        if (text::normalize(s->text) == wanted) return ref_of(s);
    return std::nullopt;
}

}  // namespace

Candidate parse_completion(const std::string& raw, const DialogueSpec& spec, bool ks_mode,
                           const std::optional<std::string>& expected_speaker) {
    auto all_lines = text::split_lines(raw);
    std::vector<std::string> lines;
    std::size_t i = 0;
    while (i < all_lines.size() && text::trim(all_lines[i]).empty()) ++i;
    for (; i < all_lines.size(); ++i) {
        if (text::trim(all_lines[i]).empty()) break;
        std::string line = all_lines[i];
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(std::move(line));
    }

    Candidate c;
    c.raw = raw;
    std::size_t idx = 0;
    std::optional<std::size_t> utterance_line;
    if (ks_mode) {
        while (idx < lines.size() && !utterance_speaker(lines[idx])) {
            const auto& line = lines[idx];
            auto at = line.find(prompt_format::fact_infix);
            if (at == std::string::npos) break;
            std::string_view label(line.data(), at);
            std::string_view sentence(line.data() + at + prompt_format::fact_infix.size(),
                                      line.size() - at - prompt_format::fact_infix.size());
            c.selected_facts.push_back({match_fact(spec, label, sentence), line});
            ++idx;
        }
        if (idx < lines.size() && utterance_speaker(lines[idx])) utterance_line = idx;
    } else {
        for (; idx < lines.size(); ++idx) {
            if (utterance_speaker(lines[idx])) {
                utterance_line = idx;
                break;
            }
        }
    }
    if (!utterance_line) throw Error(ErrorCode::parse_error, "no utterance line found in completion");

    std::string_view line = lines[*utterance_line];
    if (starts_with(line, prompt_format::utterance_label)) line.remove_prefix(prompt_format::utterance_label.size());
    line.remove_prefix(prompt_format::utterance_marker.size());
    auto colon = line.find(": ");
    c.speaker = std::string(text::trim(line.substr(0, colon)));
    c.text = std::string(text::trim(line.substr(colon + 2)));
    if (c.text.empty()) throw Error(ErrorCode::parse_error, "completion has an empty utterance");

    if (!spec.is_participant(c.speaker)) {
        if (!expected_speaker)
            throw Error(ErrorCode::parse_error, "speaker '" + c.speaker + "' is not a participant");
        c.warnings.push_back("speaker '" + c.speaker + "' is not a participant; reassigned to '" +
                             *expected_speaker + "'");
        c.speaker = *expected_speaker;
    }
    return c;
}

std::optional<std::string> alternate_speaker(const DialogueSpec& spec, const std::optional<std::string>& last) {
    auto player = spec.player_name();
    auto npcs = spec.npc_names();
    if (last && player && *last == *player) {
        if (!npcs.empty()) return npcs.front();
        return player;
    }
    if (player) return player;
    if (!npcs.empty()) return npcs.front();
    return std::nullopt;
}

std::vector<Candidate> generate_candidates(const GenerationTask& task, const PromptConfig& config, std::size_t k,
                                           LmBackend& backend, const GenerationOptions& options) {
    if (k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    static const std::vector<Dialogue> no_pool;
    const auto prompt = build_icl_prompt(task, config, options.index, options.pool ? *options.pool : no_pool);

    std::optional<std::string> expected = options.expected_speaker;
    if (!expected) {
        std::optional<std::string> last;
        if (task.subtree.contains(task.most_recent)) last = task.subtree.node(task.most_recent).speaker;
        expected = alternate_speaker(task.spec, last);
    }

    std::vector<std::optional<Candidate>> slots(k);
    std::vector<std::exception_ptr> failures(k);
    auto run_slot = [&](std::size_t i) {
        try {
            for (std::uint64_t attempt = 0; attempt < 2; ++attempt) {
                CompletionParams params = options.decode;
                params.seed = Rng::derive(config.seed, i * 2 + attempt);
                auto raw = backend.complete(prompt.text, params);
                try {
                    slots[i] = parse_completion(raw, task.spec, is_ks(config.mode), expected);
                    return;
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::parse_error) throw;
                }
            }
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };

    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, k);
    if (jobs == 1) {
        for (std::size_t i = 0; i < k; ++i) run_slot(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (auto i = next.fetch_add(1); i < k; i = next.fetch_add(1)) run_slot(i);
            });
        for (auto& t : workers) t.join();
    }

    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    std::vector<Candidate> out;
    for (auto& s : slots)
        if (s) out.push_back(std::move(*s));
    if (out.empty()) throw Error(ErrorCode::parse_error, "zero parseable candidates");
    return out;
}

CommitPolicy CommitPolicy::seeded_random(std::uint64_t seed) {
    return CommitPolicy([seed](std::size_t round, const std::vector<std::string>& ids, const DialogueTree&) {
        Rng rng(Rng::derive(seed, round));
        return ids[rng.index(ids.size())];
    });
}

CommitPolicy CommitPolicy::external(Chooser chooser) { return CommitPolicy(std::move(chooser)); }

std::string CommitPolicy::choose(std::size_t round, const std::vector<std::string>& candidate_ids,
                                 const DialogueTree& tree) const {
    if (candidate_ids.empty()) throw Error(ErrorCode::invalid_argument, "no candidates to choose from");
    auto id = chooser_(round, candidate_ids, tree);
    if (std::find(candidate_ids.begin(), candidate_ids.end(), id) == candidate_ids.end())
        throw Error(ErrorCode::conflict, "chosen id '" + id + "' is not a candidate of this round");
    return id;
}

SpineSession::SpineSession(DialogueSpec spec, UtteranceNode start, PromptConfig config)
    : spec_(std::move(spec)), config_(std::move(config)) {
    config_.validate();
    if (start.id.empty()) start.id = "start";
    if (!spec_.is_participant(start.speaker))
        throw Error(ErrorCode::invalid_argument, "start speaker '" + start.speaker + "' is not a participant");
    if (text::trim(start.text).empty()) throw Error(ErrorCode::invalid_argument, "start utterance is empty");
    for (const auto& f : start.support_facts) resolve_fact(spec_, f);
    tree_.start_id = start.id;
    committed_.push_back(start.id);
    tree_.nodes.emplace(start.id, std::move(start));
}

GenerationTask SpineSession::frontier_task() const {
    GenerationTask task;
    task.item_id = "spine/" + frontier();
    task.spec = spec_;
    task.subtree = tree_;
    task.most_recent = frontier();
    task.history = linearize(tree_, frontier());
    return task;
}

std::vector<std::string> SpineSession::propose(std::size_t k, LmBackend& backend, const GenerationOptions& options) {
    if (open_) throw Error(ErrorCode::conflict, "the previous round has not been committed");
    auto candidates = generate_candidates(frontier_task(), config_, k, backend, options);

    const std::size_t round = rounds_.size() + 1;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "r%03zuc%zu", round, i);
        UtteranceNode node;
        node.id = buf;
        node.speaker = candidates[i].speaker;
        node.text = candidates[i].text;
        node.support_facts = candidates[i].resolved_facts();
        node.origin = Origin::generated_uncommitted;
        for (const auto& w : candidates[i].warnings) warnings_.push_back(node.id + ": " + w);
        tree_.edges.push_back({frontier(), node.id, false});
        ids.push_back(node.id);
        tree_.nodes.emplace(node.id, std::move(node));
    }
    rounds_.push_back(ids);
    open_ = true;
    return ids;
}

void SpineSession::commit(const std::string& candidate_id) {
    if (!open_) throw Error(ErrorCode::conflict, "no open round to commit");
    const auto& open = rounds_.back();
    if (std::find(open.begin(), open.end(), candidate_id) == open.end())
        throw Error(ErrorCode::conflict, "'" + candidate_id + "' is not a candidate of the open round");
    tree_.nodes.at(candidate_id).origin = Origin::generated_committed;
    committed_.push_back(candidate_id);
    open_ = false;
}

void SpineSession::edit_node(const std::string& id, const std::optional<std::string>& text,
                             const std::optional<std::string>& speaker,
                             const std::optional<std::vector<FactRef>>& facts) {
    auto it = tree_.nodes.find(id);
    if (it == tree_.nodes.end()) throw Error(ErrorCode::not_found, "unknown node '" + id + "'");
    if (text && text::trim(*text).empty()) throw Error(ErrorCode::invalid_argument, "utterance text is empty");
    if (speaker && !spec_.is_participant(*speaker))
        throw Error(ErrorCode::invalid_argument, "speaker '" + *speaker + "' is not a participant");
    if (facts)
        for (const auto& f : *facts) resolve_fact(spec_, f);
    // all checks passed; apply together
    if (text) it->second.text = *text;
    if (speaker) it->second.speaker = *speaker;
    if (facts) it->second.support_facts = *facts;
}

SpineResult SpineSession::result() const {
    SpineResult r;
    r.tree = tree_;
    r.committed_path = committed_;
    r.rounds = completed_rounds();
    r.round_candidates = rounds_;
    r.warnings = warnings_;
    return r;
}

SpineResult generate_spine(const DialogueSpec& spec, const UtteranceNode& start, std::size_t rounds, std::size_t k,
                           const PromptConfig& config, const CommitPolicy& policy, LmBackend& backend,
                           const GenerationOptions& options) {
    if (rounds == 0) throw Error(ErrorCode::invalid_argument, "rounds must be at least 1");
    if (k == 0) throw Error(ErrorCode::invalid_argument, "k must be at least 1");
    SpineSession session(spec, start, config);
    for (std::size_t r = 1; r <= rounds; ++r) {
        std::vector<std::string> ids;
        try {
            ids = session.propose(k, backend, options);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::parse_error) throw;
            auto result = session.result();
            result.partial = true;
            result.partial_reason = "round " + std::to_string(r) + ": " + e.what();
            return result;
        }
        session.commit(policy.choose(r, ids, session.tree()));
    }
    return session.result();
}

Corpus export_spine(const DialogueSpec& spec, const DialogueTree& tree, const std::string& dialogue_id) {
    Corpus c;
    QuestSpec quest;
    quest.quest_name = spec.quest_name;
    c.quests.push_back(std::move(quest));
    c.dialogues.push_back({dialogue_id, spec, tree});
    return c;
}

}  // namespace qw
