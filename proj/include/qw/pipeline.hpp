#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "qw/evaluation.hpp"
#include "qw/model.hpp"
#include "qw/prompting.hpp"
#include "qw/writer.hpp"

namespace qw {

// Next-utterance items for the dialogues of one split (all dialogues when
// split is unset), in corpus order. Every item carries its gold target.
std::vector<GenerationTask> nup_tasks(const Corpus& corpus, std::optional<Split> split, std::size_t variants,
                                      std::uint64_t seed);

// Dialogues usable as few-shot exemplars: the train split when the corpus
// has an assignment, otherwise every dialogue.
std::vector<Dialogue> exemplar_pool(const Corpus& corpus);

struct NupRunOptions {
    PromptConfig config;
    CompletionParams decode;
    std::size_t jobs = 1;
};

// One candidate per task. Item i uses seed derive(config.seed, i), so the
// output does not depend on `jobs`. A task whose completions are all
// unparseable gets an empty candidate.
std::vector<NupResult> run_nup(const std::vector<GenerationTask>& tasks, LmBackend& backend,
                               const std::vector<Dialogue>& pool, const Bm25Index* index,
                               const NupRunOptions& options);

}  // namespace qw
