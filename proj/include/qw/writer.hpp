#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "qw/linearizer.hpp"
#include "qw/model.hpp"
#include "qw/prompting.hpp"
#include "qw/retrieval.hpp"

namespace qw {

struct CompletionParams {
    std::size_t max_tokens = 128;
    double temperature = 0.7;
    std::vector<std::string> stop{"\n\n"};
    std::optional<std::uint64_t> seed;
};

// Text completion endpoint. Implementations must tolerate concurrent calls
// and should be deterministic for temperature 0 with a fixed seed.
class LmBackend {
  public:
    virtual ~LmBackend() = default;
    virtual std::string complete(const std::string& prompt, const CompletionParams& params) = 0;
    virtual std::string name() const = 0;
};

// Offline backend that fabricates a plausible continuation from the prompt
// itself: the next speaker is the first participant other than the last
// speaker, and the utterance reuses a sentence from the FACTS section. The
// output depends only on (prompt, seed).
class MockBackend : public LmBackend {
  public:
    struct Options {
        // Emit "<label> fact:" lines before the utterance. Unset: detect from
        // the prompt (knowledge-selection histories contain "utterance: ").
        std::optional<bool> ks;
    };

    MockBackend() = default;
    explicit MockBackend(Options options) : options_(options) {}

    std::string complete(const std::string& prompt, const CompletionParams& params) override;
    std::string name() const override { return "mock"; }

  private:
    Options options_;
};

// Replays fixed responses in order, cycling. Used by tests and demos.
class ScriptedBackend : public LmBackend {
  public:
    explicit ScriptedBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {}

    std::string complete(const std::string& prompt, const CompletionParams& params) override;
    std::string name() const override { return "scripted"; }
    std::size_t calls() const { return calls_.load(); }

  private:
    std::vector<std::string> responses_;
    std::atomic<std::size_t> calls_{0};
};

// OpenAI-compatible completions client: POST {base_url}/completions with
// {model, prompt, max_tokens, temperature, stop, seed}; reads
// choices[0].text. Transport errors and 5xx responses are retried with
// exponential backoff, then reported as Error(backend_failure).
class HttpBackend : public LmBackend {
  public:
    struct Options {
        std::string base_url;
        std::string api_key;
        std::string model = "text-davinci-003";
        std::size_t retries = 1;
        std::chrono::milliseconds backoff{500};
        std::chrono::seconds timeout{60};
    };

    explicit HttpBackend(Options options);

    // Reads QW_LM_BASE_URL, QW_LM_API_KEY and optionally QW_LM_MODEL.
    static Options options_from_env();

    std::string complete(const std::string& prompt, const CompletionParams& params) override;
    std::string name() const override { return "http"; }

  private:
    Options options_;
};

struct SelectedFact {
    std::optional<FactRef> ref;  // unset when the line matched no statement
    std::string raw_line;

    friend bool operator==(const SelectedFact&, const SelectedFact&) = default;
};

struct Candidate {
    std::string speaker;
    std::string text;
    std::vector<SelectedFact> selected_facts;
    std::string raw;
    std::vector<std::string> warnings;

    std::vector<FactRef> resolved_facts() const;
};

// Parses one raw completion. Anything after the first blank line is
// ignored. In ks_mode leading "<X> fact: ..." lines are matched against
// Q ∪ B (exact text, then case/whitespace-normalised); the utterance line may
// carry the "utterance: " label. A speaker outside the participant list is
// replaced by expected_speaker with a warning. Throws Error(parse_error)
// when no utterance line is found.
Candidate parse_completion(const std::string& raw, const DialogueSpec& spec, bool ks_mode,
                           const std::optional<std::string>& expected_speaker = std::nullopt);

// Next speaker by alternation: after the player the first NPC speaks, after
// an NPC the player does.
std::optional<std::string> alternate_speaker(const DialogueSpec& spec, const std::optional<std::string>& last);

struct GenerationOptions {
    const Bm25Index* index = nullptr;
    const std::vector<Dialogue>* pool = nullptr;
    CompletionParams decode;
    std::optional<std::string> expected_speaker;  // default: alternate_speaker
    std::size_t jobs = 1;                          // concurrent completions
};

// Builds the prompt once and issues k completions (seeded per slot). An
// unparseable completion is retried once and then dropped. Throws
// Error(parse_error) "zero parseable candidates" when nothing survives.
std::vector<Candidate> generate_candidates(const GenerationTask& task, const PromptConfig& config, std::size_t k,
                                           LmBackend& backend, const GenerationOptions& options = {});

class CommitPolicy {
  public:
    using Chooser = std::function<std::string(std::size_t round, const std::vector<std::string>& candidate_ids,
                                              const DialogueTree& tree)>;

    static CommitPolicy seeded_random(std::uint64_t seed);
    static CommitPolicy external(Chooser chooser);

    // Throws Error(conflict) if the chooser returns an id outside the round.
    std::string choose(std::size_t round, const std::vector<std::string>& candidate_ids,
                       const DialogueTree& tree) const;

  private:
    explicit CommitPolicy(Chooser chooser) : chooser_(std::move(chooser)) {}
    Chooser chooser_;
};

struct SpineResult {
    DialogueTree tree;
    std::vector<std::string> committed_path;
    std::size_t rounds = 0;  // completed rounds
    std::vector<std::vector<std::string>> round_candidates;
    bool partial = false;
    std::string partial_reason;
    std::vector<std::string> warnings;
};

// Incremental spine growth: propose candidates under the committed frontier,
// then commit one. Single writer; callers serialise access.
class SpineSession {
  public:
    SpineSession(DialogueSpec spec, UtteranceNode start, PromptConfig config);

    const DialogueSpec& spec() const { return spec_; }
    const PromptConfig& config() const { return config_; }
    const DialogueTree& tree() const { return tree_; }
    const std::vector<std::string>& committed_path() const { return committed_; }
    const std::vector<std::vector<std::string>>& round_candidates() const { return rounds_; }
    const std::string& frontier() const { return committed_.back(); }
    bool round_open() const { return open_; }
    std::size_t completed_rounds() const { return open_ ? rounds_.size() - 1 : rounds_.size(); }
    const std::vector<std::string>& warnings() const { return warnings_; }

    // Task for the next utterance after the frontier.
    GenerationTask frontier_task() const;

    // Attaches up to k new candidates under the frontier and opens a round.
    // Throws Error(conflict) if a round is already open.
    std::vector<std::string> propose(std::size_t k, LmBackend& backend, const GenerationOptions& options = {});

    // Closes the open round. Throws Error(conflict) unless id is one of the
    // open round's candidates.
    void commit(const std::string& candidate_id);

    // Replaces text, speaker or facts of a node after validating them.
    void edit_node(const std::string& id, const std::optional<std::string>& text,
                   const std::optional<std::string>& speaker, const std::optional<std::vector<FactRef>>& facts);

    SpineResult result() const;

  private:
    DialogueSpec spec_;
    PromptConfig config_;
    DialogueTree tree_;
    std::vector<std::string> committed_;
    std::vector<std::vector<std::string>> rounds_;
    std::vector<std::string> warnings_;
    bool open_ = false;
};

// Grows `rounds` rounds of k candidates each from a single start utterance,
// committing one candidate per round through `policy`. A round that yields
// no candidates ends the run with a partial result.
SpineResult generate_spine(const DialogueSpec& spec, const UtteranceNode& start, std::size_t rounds, std::size_t k,
                           const PromptConfig& config, const CommitPolicy& policy, LmBackend& backend,
                           const GenerationOptions& options = {});

// Corpus-format document holding one grown dialogue; passes
// validate_corpus.
Corpus export_spine(const DialogueSpec& spec, const DialogueTree& tree, const std::string& dialogue_id);

}  // namespace qw
