#pragma once

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "qw/linearizer.hpp"
#include "qw/model.hpp"

namespace qw {

inline constexpr double bleu_epsilon = 1e-9;

// Clipped n-gram counts of one candidate against its references.
struct BleuStats {
    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    std::size_t candidate_length = 0;
    std::size_t reference_length = 0;  // closest reference length, shorter on ties
};

// Tokens are those of the default heuristic tokenizer, lowercased.
std::vector<std::string> bleu_tokens(std::string_view text);

BleuStats bleu_stats(std::string_view candidate, const std::vector<std::string>& references);

// Sentence BLEU-4 with uniform weights. With smooth set, zero precisions are
// replaced by bleu_epsilon. An empty candidate scores 0. Throws
// Error(invalid_argument) when references is empty.
double bleu4(std::string_view candidate, const std::vector<std::string>& references, bool smooth = true);

// Unsmoothed corpus BLEU-4 over pooled statistics.
double corpus_bleu4(const std::vector<BleuStats>& stats);

struct ReferenceSets {
    std::vector<std::string> gold;
    std::vector<std::string> quest;
    std::vector<std::string> bio;
};

// Throws Error(invalid_argument) when the task has no gold target.
ReferenceSets reference_sets(const GenerationTask& task);

// Semantic similarity provided outside the library.
class ExternalScorer {
  public:
    virtual ~ExternalScorer() = default;
    // Returns a score in [0, 1]; throws on transport failure.
    virtual double score(const std::string& candidate, const std::vector<std::string>& references) = 0;
    virtual std::string name() const = 0;
};

// POST {base_url}/score with {"candidate": ..., "references": [...]}; expects
// {"score": <number>}.
class HttpScorer : public ExternalScorer {
  public:
    explicit HttpScorer(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(60))
        : base_url_(std::move(base_url)), timeout_(timeout) {}

    double score(const std::string& candidate, const std::vector<std::string>& references) override;
    std::string name() const override { return "http"; }

  private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

struct Interval {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;

    friend bool operator==(const Interval&, const Interval&) = default;
};

// Percentile bootstrap of the mean. Quantiles interpolate linearly between
// order statistics of the resampled means; the interval is widened to
// contain the sample mean if needed.
Interval bootstrap_ci(const std::vector<double>& scores, std::size_t resamples, double level, std::uint64_t seed);

struct NupResult {
    GenerationTask task;
    std::string candidate;  // utterance text without the speaker
};

struct ItemScores {
    std::string item_id;
    std::string candidate;
    double bleu_gold = 0.0;
    std::optional<double> bleu_quest;  // absent when the set is empty
    std::optional<double> bleu_bio;
    std::optional<double> semantic;
    std::optional<std::string> semantic_error;
};

struct ColumnSummary {
    std::size_t n = 0;
    Interval sentence;                  // smoothed sentence BLEU mean and CI
    std::optional<double> corpus_bleu;  // unsmoothed, pooled
};

struct EvalOptions {
    std::size_t resamples = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
    bool smooth = true;
    std::size_t jobs = 1;
};

struct MetricReport {
    std::size_t item_count = 0;
    std::vector<ItemScores> items;
    std::optional<ColumnSummary> gold;
    std::optional<ColumnSummary> quest;
    std::optional<ColumnSummary> bio;
    std::optional<ColumnSummary> semantic;
    std::optional<std::string> scorer;
    std::size_t scorer_errors = 0;
    EvalOptions options;
};

MetricReport evaluate_nup(const std::vector<NupResult>& results, ExternalScorer* scorer = nullptr,
                          const EvalOptions& options = {});

void to_json(nlohmann::json& j, const MetricReport& r);
std::string render_table(const MetricReport& r);

// ---------------------------------------------------------------------------
// Human judgments

enum class Criterion { coherence, nonviolation, bio_usage, quest_usage, content_suggestion, engagingness };
const char* to_string(Criterion c) noexcept;
std::optional<Criterion> criterion_from_string(std::string_view s) noexcept;

enum class Winner { a, b, tie };

struct JudgmentRecord {
    enum class Kind { likert, pairwise };

    std::string item_id;
    Criterion criterion = Criterion::coherence;
    Kind kind = Kind::likert;
    std::string system;    // likert: judged system (may be empty)
    int score = 0;         // likert: 1..4
    std::string system_a;  // pairwise
    std::string system_b;
    Winner winner = Winner::tie;
};

// CSV header: item_id,criterion,kind,system,score,system_a,system_b,winner
// (winner is A, B or tie). JSON: an array of objects with the same keys.
// Throws Error(parse_error) on malformed input or out-of-range values.
std::vector<JudgmentRecord> parse_judgments_csv(std::string_view text);
std::vector<JudgmentRecord> parse_judgments_json(const nlohmann::json& j);

struct LikertCell {
    std::size_t n = 0;
    Interval ci;
};

// (system, criterion) -> mean and bootstrap CI. Throws Error(invalid_argument)
// when any record is pairwise.
std::map<std::pair<std::string, Criterion>, LikertCell> likert_aggregate(const std::vector<JudgmentRecord>& records,
                                                                         std::size_t resamples = 1000,
                                                                         double level = 0.95,
                                                                         std::uint64_t seed = 0);

struct WinCell {
    std::size_t wins = 0;
    std::size_t comparisons = 0;  // ties excluded
    std::size_t ties = 0;
    double percent = 0.0;         // rounded to one decimal
    std::string formatted;        // e.g. "81.2"
};

// Percent with one decimal, ties going to the even tenth.
std::string format_win_percent(std::size_t wins, std::size_t comparisons);

// (system, criterion) -> wins over all opponents. Cells with no decided
// comparison are absent. Throws Error(invalid_argument) on likert records.
std::map<std::pair<std::string, Criterion>, WinCell> pairwise_winrates(const std::vector<JudgmentRecord>& records);

nlohmann::json likert_json(const std::map<std::pair<std::string, Criterion>, LikertCell>& cells);
nlohmann::json winrate_json(const std::map<std::pair<std::string, Criterion>, WinCell>& cells);

// ---------------------------------------------------------------------------
// Annotation agreement

using AnnotationMap = std::map<std::string, std::set<FactRef>>;

struct Agreement {
    std::size_t nodes = 0;
    double em_avg = 0.0;
    double jaccard_avg = 0.0;
};

// Throws Error(invalid_argument) when the key sets differ or are empty.
Agreement annotation_agreement(const AnnotationMap& a, const AnnotationMap& b);

// Accepts either {"node": [{"source":..,"i":..}, ...]} or a corpus document
// (keys become "dialogue/node").
AnnotationMap parse_annotations(const nlohmann::json& j);

}  // namespace qw
