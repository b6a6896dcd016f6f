#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qw/linearizer.hpp"
#include "qw/model.hpp"
#include "qw/retrieval.hpp"

namespace qw {

// Which parts of the ontology a prompt carries.
//   vanilla      participants and history only
//   quest_only   adds quest context, no biographies
//   full         everything
//   ks           full, history annotated with support facts
//   ks_one_fact  ks, plus one sampled gold fact for the next utterance
//   ks_oracle    ks, plus every gold fact for the next utterance
enum class PromptMode { vanilla, quest_only, full, ks, ks_one_fact, ks_oracle };

const char* to_string(PromptMode mode) noexcept;
std::optional<PromptMode> prompt_mode_from_string(std::string_view s) noexcept;
bool is_ks(PromptMode mode) noexcept;

inline constexpr std::size_t default_icl_budget = 4000;
inline constexpr std::size_t default_sl_window = 1024;

struct PromptConfig {
    PromptMode mode = PromptMode::full;
    std::size_t token_budget = default_icl_budget;
    std::string tokenizer_id = "default";
    bool allow_few_shot = true;
    std::uint64_t seed = 0;

    // Throws Error(invalid_argument) on a zero budget or unknown tokenizer.
    void validate() const;
};

struct Prompt {
    std::string text;
    std::size_t token_count = 0;
    std::size_t num_exemplars = 0;       // whole exemplars only
    bool truncated = false;              // the task's own B/Q content was trimmed
    bool partial_leading_exemplar = false;
    std::vector<std::string> exemplar_ids;  // whole exemplars, most relevant first
    std::optional<std::string> partial_exemplar_id;
};

// Template pieces. Prompts are completion-style text.
namespace prompt_format {
inline constexpr std::string_view facts_header = "FACTS:";
inline constexpr std::string_view context_header = "DIALOG CONTEXT:";
inline constexpr std::string_view know_header = "KNOW BY THE END OF THE DIALOG:";
inline constexpr std::string_view participants_header = "DIALOG PARTICIPANTS:";
inline constexpr std::string_view dialog_header = "DIALOG:";
inline constexpr std::string_view indent = "   ";
inline constexpr std::string_view utterance_marker = "> ";
inline constexpr std::string_view fact_infix = " fact: ";
inline constexpr std::string_view utterance_label = "utterance: ";
inline constexpr std::string_view exemplar_separator = "\n\n---\n\n";
}  // namespace prompt_format

// "> Speaker: text"
std::string render_utterance(const UtteranceNode& node);
// "<label> fact: <statement text>"
std::string render_fact_line(const DialogueSpec& spec, const FactRef& ref);

// Biographies in prompt order: non-participant entities first (in spec
// order), participant entities last.
std::vector<const BiographyPassage*> ordered_bios(const DialogueSpec& spec);

// One dialogue rendered as FACTS / DIALOG CONTEXT / KNOW BY THE END OF THE
// DIALOG / DIALOG PARTICIPANTS / DIALOG sections, limited by mode. Knowledge
// selection modes annotate history with each node's support facts. The text
// ends right after the last history line.
std::string render_dialogue_block(const DialogueSpec& spec, const std::vector<UtteranceNode>& history,
                                  PromptMode mode);

// Knowledge-selection history: per utterance, one "<label> fact: ..." line
// per annotation and then "utterance: > Speaker: text"; blocks are separated
// by blank lines. Throws on an unresolvable FactRef.
std::string build_ks_history(const DialogueSpec& spec, const std::vector<UtteranceNode>& history,
                             const std::map<std::string, std::vector<FactRef>>& annotations);

std::vector<FactRef> select_oracle_facts(const GenerationTask& task);
FactRef sample_one_fact(const GenerationTask& task, std::uint64_t seed);

// The task's own block: dialogue block plus, for ks_one_fact / ks_oracle,
// the gold fact lines for the next utterance.
std::string render_task_block(const GenerationTask& task, const PromptConfig& config);

// Few-shot prompt: BM25-ranked exemplars from `pool` are prepended, most
// relevant nearest the task, while whole exemplars fit in the budget; the
// best-ranked exemplar that did not fit is then left-truncated by whole lines
// into the remaining space. When the task block alone is over budget,
// biographies and then quest statements are dropped; if it still does not
// fit, throws Error(overflow) "irreducible overflow".
Prompt build_icl_prompt(const GenerationTask& task, const PromptConfig& config, const Bm25Index* index,
                        const std::vector<Dialogue>& pool);

// Exemplar text for a gold dialogue in the given mode.
std::string render_exemplar(const Dialogue& dialogue, PromptMode mode);

// Sequence-to-sequence serialization.
struct SlFormat {
    std::string separator = "</s>";
    std::string tokenizer_id = "default";
};

// [B, Q, P, H] with the separator after every statement. Over the window,
// whole biographies are dropped first (participants last), then words are
// cut from the left.
std::string build_sl_source(const GenerationTask& task, std::size_t window = default_sl_window,
                            const SlFormat& format = {});

// "> Speaker: text</s>", preceded by "<label> fact: <text>" items joined
// with ", " when ks is set.
std::string build_sl_target(const GenerationTask& task, bool ks, const SlFormat& format = {});

struct SlTarget {
    std::vector<FactRef> facts;
    std::string speaker;
    std::string text;
};

// Inverse of build_sl_target, resolving fact items against the spec.
SlTarget parse_sl_target(const DialogueSpec& spec, std::string_view target, const SlFormat& format = {});

}  // namespace qw
