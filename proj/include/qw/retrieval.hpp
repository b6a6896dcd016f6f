#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "qw/model.hpp"

namespace qw {

// Lowercases ASCII and splits on every byte that is not an ASCII letter or
// digit. Bytes >= 0x80 count as word characters so UTF-8 words stay whole.
std::vector<std::string> bm25_tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

// Okapi BM25 over an immutable in-memory document set.
class Bm25Index {
  public:
    Bm25Index() = default;
    // Throws Error(invalid_argument) on duplicate ids or parameters out of range.
    Bm25Index(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params = {});

    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    const std::vector<std::string>& ids() const { return ids_; }
    bool contains(std::string_view id) const;

    double average_length() const { return avg_len_; }
    std::size_t length(std::string_view id) const;
    std::size_t document_frequency(std::string_view term) const;
    std::size_t term_frequency(std::string_view id, std::string_view term) const;
    const std::map<std::string, std::size_t, std::less<>>& document_frequencies() const { return df_; }
    Bm25Params params() const { return params_; }

    // idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
    double idf(std::string_view term) const;

    // Sum over query tokens (repeats included) of
    // idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen)).
    // Throws Error(not_found) for an unknown doc id.
    double score(std::string_view query, std::string_view doc_id) const;

  private:
    std::size_t slot(std::string_view id) const;

    Bm25Params params_;
    std::vector<std::string> ids_;
    std::map<std::string, std::size_t, std::less<>> slots_;
    std::vector<std::map<std::string, std::size_t, std::less<>>> tf_;
    std::vector<std::size_t> lengths_;
    std::map<std::string, std::size_t, std::less<>> df_;
    double avg_len_ = 0.0;
};

inline Bm25Index build_index(const std::vector<std::pair<std::string, std::string>>& docs, double k1 = 1.2,
                             double b = 0.75) {
    return Bm25Index(docs, Bm25Params{k1, b});
}

inline double bm25_score(const Bm25Index& index, std::string_view query, std::string_view doc_id) {
    return index.score(query, doc_id);
}

// [B, Q, P] query text: biography entity names and sentences, the quest
// statements as rendered in prompts, then participant names.
std::string exemplar_query(const DialogueSpec& spec);

struct ScoredDoc {
    std::string id;
    double score = 0.0;

    friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

// Top-k documents for the spec's query, by descending score then id.
std::vector<ScoredDoc> retrieve_exemplars(const Bm25Index& index, const DialogueSpec& spec, std::size_t k);

// Ranks every document for an arbitrary query.
std::vector<ScoredDoc> rank_all(const Bm25Index& index, std::string_view query);

// Document text for a training dialogue: its full linearized gold history
// rendered as "Speaker: text" lines.
std::string exemplar_document(const Dialogue& dialogue);

Bm25Index build_exemplar_index(const std::vector<Dialogue>& pool, Bm25Params params = {});

}  // namespace qw
