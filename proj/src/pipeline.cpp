#include "qw/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "qw/error.hpp"
#include "qw/rng.hpp"

namespace qw {

std::vector<GenerationTask> nup_tasks(const Corpus& corpus, std::optional<Split> split, std::size_t variants,
                                      std::uint64_t seed) {
    std::vector<GenerationTask> out;
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
        const auto& d = corpus.dialogues[i];
        if (split) {
            if (!corpus.split_assignment) throw Error(ErrorCode::invalid_argument, "corpus has no split assignment");
            auto it = corpus.split_assignment->find(d.spec.quest_name);
            if (it == corpus.split_assignment->end() || it->second != *split) continue;
        }
        for (auto& t : build_nup_items(d.tree, d.spec, variants, Rng::derive(seed, i), d.id)) out.push_back(std::move(t));
    }
    return out;
}

std::vector<Dialogue> exemplar_pool(const Corpus& corpus) {
    if (!corpus.split_assignment) return corpus.dialogues;
    std::vector<Dialogue> out;
    for (const auto& d : corpus.dialogues) {
        auto it = corpus.split_assignment->find(d.spec.quest_name);
        if (it != corpus.split_assignment->end() && it->second == Split::train) out.push_back(d);
    }
    return out;
}

std::vector<NupResult> run_nup(const std::vector<GenerationTask>& tasks, LmBackend& backend,
                               const std::vector<Dialogue>& pool, const Bm25Index* index,
                               const NupRunOptions& options) {
    std::vector<NupResult> out(tasks.size());
    std::vector<std::exception_ptr> failures(tasks.size());
    auto run = [&](std::size_t i) {
        try {
            PromptConfig config = options.config;
            config.seed = Rng::derive(options.config.seed, i);
            GenerationOptions gen;
            gen.pool = &pool;
            gen.index = index;
            gen.decode = options.decode;
            out[i].task = tasks[i];
            try {
                auto candidates = generate_candidates(tasks[i], config, 1, backend, gen);
                out[i].candidate = candidates.front().text;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::parse_error) throw;
            }
        } catch (...) {
            failures[i] = std::current_exception();
        }
    };
    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(tasks.size(), 1));
    if (jobs == 1) {
        for (std::size_t i = 0; i < tasks.size(); ++i) run(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (auto i = next.fetch_add(1); i < tasks.size(); i = next.fetch_add(1)) run(i);
            });
        for (auto& t : workers) t.join();
    }
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
    return out;
}

}  // namespace qw
