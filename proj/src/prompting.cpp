#include "qw/prompting.hpp"

#include <algorithm>

#include "qw/error.hpp"
#include "qw/rng.hpp"
#include "qw/text.hpp"
#include "qw/tokenizer.hpp"

namespace qw {

namespace fmt = prompt_format;

const char* to_string(PromptMode mode) noexcept {
    switch (mode) {
        case PromptMode::vanilla: return "vanilla";
        case PromptMode::quest_only: return "quest_only";
        case PromptMode::full: return "full";
        case PromptMode::ks: return "ks";
        case PromptMode::ks_one_fact: return "ks_one_fact";
        case PromptMode::ks_oracle: return "ks_oracle";
    }
    return "full";
}

std::optional<PromptMode> prompt_mode_from_string(std::string_view s) noexcept {
    for (auto m : {PromptMode::vanilla, PromptMode::quest_only, PromptMode::full, PromptMode::ks,
                   PromptMode::ks_one_fact, PromptMode::ks_oracle})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

bool is_ks(PromptMode mode) noexcept {
    return mode == PromptMode::ks || mode == PromptMode::ks_one_fact || mode == PromptMode::ks_oracle;
}

void PromptConfig::validate() const {
    if (token_budget == 0) throw Error(ErrorCode::invalid_argument, "token budget must be positive");
    if (!TokenizerRegistry::global().has(tokenizer_id))
        throw Error(ErrorCode::invalid_argument, "unknown tokenizer '" + tokenizer_id + "'");
}

std::string render_utterance(const UtteranceNode& node) {
    return std::string(fmt::utterance_marker) + node.speaker + ": " + node.text;
}

std::string render_fact_line(const DialogueSpec& spec, const FactRef& ref) {
    const auto& s = resolve_fact(spec, ref);
    return fact_label(spec, ref) + std::string(fmt::fact_infix) + s.text;
}

std::vector<const BiographyPassage*> ordered_bios(const DialogueSpec& spec) {
    std::vector<const BiographyPassage*> out;
    for (const auto& b : spec.bios)
        if (!spec.is_participant(b.entity_name)) out.push_back(&b);
    for (const auto& b : spec.bios)
        if (spec.is_participant(b.entity_name)) out.push_back(&b);
    return out;
}

std::string build_ks_history(const DialogueSpec& spec, const std::vector<UtteranceNode>& history,
                             const std::map<std::string, std::vector<FactRef>>& annotations) {
    std::string out;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i) out += "\n";
        auto it = annotations.find(history[i].id);
        if (it != annotations.end())
            for (const auto& f : it->second) out += render_fact_line(spec, f) + "\n";
        out += std::string(fmt::utterance_label) + render_utterance(history[i]) + "\n";
    }
    return out;
}

namespace {

// `display` supplies the FACTS and quest sections; `resolver` resolves the
// history's support facts (it differs from display once trimming kicked in).
std::string render_block(const DialogueSpec& display, const DialogueSpec& resolver,
                         const std::vector<UtteranceNode>& history, PromptMode mode) {
    std::string out;
    const bool facts = mode != PromptMode::vanilla && mode != PromptMode::quest_only;
    const bool quest = mode != PromptMode::vanilla;

    if (facts) {
        out += std::string(fmt::facts_header) + "\n";
        for (const auto* b : ordered_bios(display)) {
            out += b->entity_name + "\n";
            for (const auto& s : b->statements) out += std::string(fmt::indent) + s.text + "\n";
        }
        out += "\n";
    }
    if (quest) {
        out += std::string(fmt::context_header) + "\n";
        for (const auto& o : display.in_objectives) {
            for (const auto& s : o.game_log) out += s.text + "\n";
            for (const auto& s : o.walkthrough) out += std::string(fmt::indent) + s.text + "\n";
        }
        out += "\n";
        out += std::string(fmt::know_header) + "\n";
        for (const auto& o : display.out_objectives)
            for (const auto& s : o.game_log) out += s.text + "\n";
        out += "\n";
    }
    out += std::string(fmt::participants_header) + "\n";
    out += text::join(display.participant_names(), ", ") + "\n\n";
    out += std::string(fmt::dialog_header) + "\n";
    if (is_ks(mode)) {
        std::map<std::string, std::vector<FactRef>> annotations;
        for (const auto& n : history) annotations[n.id] = n.support_facts;
        out += build_ks_history(resolver, history, annotations);
    } else {
        for (const auto& n : history) out += render_utterance(n) + "\n";
    }
    return out;
}

std::string task_block(const DialogueSpec& display, const GenerationTask& task, const PromptConfig& config) {
    auto nodes = task.history_nodes();
    std::string out = render_block(display, task.spec, nodes, config.mode);
    if (is_ks(config.mode) && !nodes.empty()) out += "\n";
    if (config.mode == PromptMode::ks_oracle) {
        for (const auto& f : select_oracle_facts(task)) out += render_fact_line(task.spec, f) + "\n";
    } else if (config.mode == PromptMode::ks_one_fact) {
        out += render_fact_line(task.spec, sample_one_fact(task, config.seed)) + "\n";
    }
    return out;
}

// Removes one unit of context: a whole biography (non-participants first),
// otherwise the leading quest statement. Returns false when nothing is left.
bool trim_once(DialogueSpec& spec) {
    auto bios = ordered_bios(spec);
    if (!bios.empty()) {
        const auto* victim = bios.front();
        auto it = std::find_if(spec.bios.begin(), spec.bios.end(),
                               [&](const BiographyPassage& b) { return &b == victim; });
        spec.bios.erase(it);
        return true;
    }
    for (auto& o : spec.in_objectives) {
        if (!o.game_log.empty()) {
            o.game_log.erase(o.game_log.begin());
            return true;
        }
        if (!o.walkthrough.empty()) {
            o.walkthrough.erase(o.walkthrough.begin());
            return true;
        }
    }
    for (auto& o : spec.out_objectives) {
        if (!o.game_log.empty()) {
            o.game_log.erase(o.game_log.begin());
            return true;
        }
    }
    return false;
}

std::string strip_trailing_newlines(std::string s) {
    while (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string assemble(const std::string* partial, const std::vector<std::string>& exemplars_by_rank,
                     const std::string& task) {
    std::string out;
    if (partial) {
        out += *partial;
        out += fmt::exemplar_separator;
    }
    for (auto it = exemplars_by_rank.rbegin(); it != exemplars_by_rank.rend(); ++it) {
        out += *it;
        out += fmt::exemplar_separator;
    }
    out += task;
    return out;
}

PromptMode exemplar_mode(PromptMode mode) {
    return is_ks(mode) ? PromptMode::ks : mode;
}

}  // namespace

std::vector<FactRef> select_oracle_facts(const GenerationTask& task) {
    if (!task.gold_facts) throw Error(ErrorCode::invalid_argument, "task has no gold facts");
    return *task.gold_facts;
}

FactRef sample_one_fact(const GenerationTask& task, std::uint64_t seed) {
    if (!task.gold_facts || task.gold_facts->empty()) throw Error(ErrorCode::invalid_argument, "no gold facts");
    Rng rng(seed);
    return (*task.gold_facts)[rng.index(task.gold_facts->size())];
}

std::string render_dialogue_block(const DialogueSpec& spec, const std::vector<UtteranceNode>& history,
                                  PromptMode mode) {
    return render_block(spec, spec, history, mode);
}

std::string render_task_block(const GenerationTask& task, const PromptConfig& config) {
    return task_block(task.spec, task, config);
}

std::string render_exemplar(const Dialogue& dialogue, PromptMode mode) {
    std::vector<UtteranceNode> nodes;
    for (const auto& id : linearize_full(dialogue.tree).ids) nodes.push_back(dialogue.tree.node(id));
    return strip_trailing_newlines(render_dialogue_block(dialogue.spec, nodes, exemplar_mode(mode)));
}

Prompt build_icl_prompt(const GenerationTask& task, const PromptConfig& config, const Bm25Index* index,
                        const std::vector<Dialogue>& pool) {
    config.validate();
    auto count = [&](const std::string& s) { return count_tokens(s, config.tokenizer_id); };

    Prompt prompt;
    DialogueSpec display = task.spec;
    std::string task_text = task_block(display, task, config);
    while (count(task_text) > config.token_budget) {
        if (!trim_once(display))
            throw Error(ErrorCode::overflow, "irreducible overflow: task block exceeds the token budget");
        prompt.truncated = true;
        task_text = task_block(display, task, config);
    }

    std::vector<std::string> chosen;
    const Dialogue* first_skipped = nullptr;
    if (config.allow_few_shot && index && !pool.empty()) {
        for (const auto& ranked : retrieve_exemplars(*index, task.spec, index->size())) {
            if (ranked.id == task.dialogue_id) continue;
            auto it = std::find_if(pool.begin(), pool.end(), [&](const Dialogue& d) { return d.id == ranked.id; });
            if (it == pool.end()) continue;
            std::string ex = render_exemplar(*it, config.mode);
            chosen.push_back(std::move(ex));
            if (count(assemble(nullptr, chosen, task_text)) <= config.token_budget) {
                prompt.exemplar_ids.push_back(it->id);
            } else {
                chosen.pop_back();
                if (!first_skipped) first_skipped = &*it;
            }
        }
    }
    prompt.num_exemplars = chosen.size();
    prompt.text = assemble(nullptr, chosen, task_text);

    if (first_skipped) {
        // Left-truncate whole lines: find the fewest dropped lines that fit.
        auto lines = text::split_lines(render_exemplar(*first_skipped, config.mode));
        auto with_tail = [&](std::size_t drop) {
            std::vector<std::string> tail(lines.begin() + static_cast<std::ptrdiff_t>(drop), lines.end());
            return text::join(tail, "\n");
        };
        std::size_t lo = 1, hi = lines.size();  // hi = drop everything
        while (lo < hi) {
            const std::size_t mid = lo + (hi - lo) / 2;
            const auto partial = with_tail(mid);
            if (count(assemble(&partial, chosen, task_text)) <= config.token_budget) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        if (lo < lines.size()) {
            const auto partial = with_tail(lo);
            auto text = assemble(&partial, chosen, task_text);
            if (count(text) <= config.token_budget) {
                prompt.text = std::move(text);
                prompt.partial_leading_exemplar = true;
                prompt.partial_exemplar_id = first_skipped->id;
            }
        }
    }
    prompt.token_count = count(prompt.text);
    return prompt;
}

namespace {

std::vector<std::string> sl_items(const DialogueSpec& spec, const std::vector<UtteranceNode>& history,
                                  std::size_t drop_bios) {
    std::vector<std::string> items;
    auto bios = ordered_bios(spec);
    for (std::size_t i = drop_bios; i < bios.size(); ++i) {
        items.push_back(bios[i]->entity_name);
        for (const auto& s : bios[i]->statements) items.push_back(s.text);
    }
    items.emplace_back(fmt::context_header);
    for (const auto& o : spec.in_objectives) {
        for (const auto& s : o.game_log) items.push_back(s.text);
        for (const auto& s : o.walkthrough) items.push_back(s.text);
    }
    items.emplace_back(fmt::know_header);
    for (const auto& o : spec.out_objectives)
        for (const auto& s : o.game_log) items.push_back(s.text);
    items.emplace_back(fmt::participants_header);
    for (const auto& p : spec.participants) items.push_back(p.name);
    items.emplace_back("HISTORY:");
    for (const auto& n : history) items.push_back(render_utterance(n));
    return items;
}

std::string join_items(const std::vector<std::string>& items, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += " ";
        out += items[i] + sep;
    }
    return out;
}

}  // namespace

std::string build_sl_source(const GenerationTask& task, std::size_t window, const SlFormat& format) {
    auto count = [&](const std::string& s) { return count_tokens(s, format.tokenizer_id); };
    const auto nodes = task.history_nodes();
    const auto bio_count = ordered_bios(task.spec).size();

    std::string source;
    for (std::size_t drop = 0; drop <= bio_count; ++drop) {
        source = join_items(sl_items(task.spec, nodes, drop), format.separator);
        if (count(source) <= window) return source;
    }
    // Cut whole words from the left until the remainder fits.
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < source.size(); ++i)
        if (!text::is_space(source[i]) && (i == 0 || text::is_space(source[i - 1]))) starts.push_back(i);
    std::size_t lo = 0, hi = starts.size();
    while (lo < hi) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (count(source.substr(starts[mid])) <= window) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    return lo < starts.size() ? source.substr(starts[lo]) : std::string();
}

std::string build_sl_target(const GenerationTask& task, bool ks, const SlFormat& format) {
    if (!task.gold_target) throw Error(ErrorCode::invalid_argument, "task has no gold target");
    std::string out;
    if (ks && task.gold_facts && !task.gold_facts->empty()) {
        std::vector<std::string> items;
        for (const auto& f : *task.gold_facts) items.push_back(render_fact_line(task.spec, f));
        out += text::join(items, ", ") + " ";
    }
    out += render_utterance(*task.gold_target) + format.separator;
    return out;
}

SlTarget parse_sl_target(const DialogueSpec& spec, std::string_view target, const SlFormat& format) {
    if (!format.separator.empty() && target.size() >= format.separator.size() &&
        target.substr(target.size() - format.separator.size()) == format.separator)
        target.remove_suffix(format.separator.size());

    struct Entry {
        std::string line;
        FactRef ref;
    };
    std::vector<Entry> dictionary;
    auto add = [&](const Statement& s) {
        FactRef ref{s.source_id, s.index};
        dictionary.push_back({render_fact_line(spec, ref), ref});
    };
    for (const auto* s : quest_statements(spec)) add(*s);
    for (const auto* s : bio_statements(spec)) add(*s);
    std::sort(dictionary.begin(), dictionary.end(),
              [](const Entry& a, const Entry& b) { return a.line.size() > b.line.size(); });

    SlTarget out;
    std::size_t pos = 0;
    while (target.substr(pos, fmt::utterance_marker.size()) != fmt::utterance_marker) {
        const Entry* match = nullptr;
        for (const auto& e : dictionary) {
            if (target.substr(pos, e.line.size()) != e.line) continue;
            auto rest = target.substr(pos + e.line.size());
            if (rest.substr(0, 2) == ", " || rest.substr(0, 3) == " > ") {
                match = &e;
                break;
            }
        }
        if (!match) throw Error(ErrorCode::parse_error, "unrecognised fact item in target");
        out.facts.push_back(match->ref);
        pos += match->line.size();
        pos += target.substr(pos, 2) == ", " ? 2 : 1;
    }
    auto utterance = target.substr(pos + fmt::utterance_marker.size());
    auto colon = utterance.find(": ");
    if (colon == std::string_view::npos) throw Error(ErrorCode::parse_error, "target utterance has no speaker");
    out.speaker = std::string(utterance.substr(0, colon));
    out.text = std::string(utterance.substr(colon + 2));
    return out;
}

}  // namespace qw
