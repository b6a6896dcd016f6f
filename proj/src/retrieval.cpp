#include "qw/retrieval.hpp"

#include <algorithm>
#include <cmath>

#include "qw/error.hpp"
#include "qw/linearizer.hpp"

namespace qw {

std::vector<std::string> bm25_tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        const bool word = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || (c >= 'A' && c <= 'Z') || c >= 0x80;
        if (word) {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

Bm25Index::Bm25Index(const std::vector<std::pair<std::string, std::string>>& docs, Bm25Params params)
    : params_(params) {
    if (!(params.k1 >= 0.0)) throw Error(ErrorCode::invalid_argument, "BM25 k1 must be >= 0");
    if (!(params.b >= 0.0 && params.b <= 1.0)) throw Error(ErrorCode::invalid_argument, "BM25 b must be in [0, 1]");

    std::size_t total = 0;
    for (const auto& [id, text] : docs) {
        if (!slots_.emplace(id, ids_.size()).second)
            throw Error(ErrorCode::invalid_argument, "duplicate document id '" + id + "'");
        ids_.push_back(id);
        auto tokens = bm25_tokenize(text);
        std::map<std::string, std::size_t, std::less<>> counts;
        for (auto& t : tokens) ++counts[t];
        for (const auto& [term, n] : counts) ++df_[term];
        lengths_.push_back(tokens.size());
        total += tokens.size();
        tf_.push_back(std::move(counts));
    }
    // An index of empty documents keeps avglen at 1 so the length
    // normalisation stays finite.
    if (!ids_.empty()) avg_len_ = total > 0 ? static_cast<double>(total) / static_cast<double>(ids_.size()) : 1.0;
}

bool Bm25Index::contains(std::string_view id) const { return slots_.find(id) != slots_.end(); }

std::size_t Bm25Index::slot(std::string_view id) const {
    auto it = slots_.find(id);
    if (it == slots_.end()) throw Error(ErrorCode::not_found, "unknown document id '" + std::string(id) + "'");
    return it->second;
}

std::size_t Bm25Index::length(std::string_view id) const { return lengths_[slot(id)]; }

std::size_t Bm25Index::document_frequency(std::string_view term) const {
    auto it = df_.find(term);
    return it == df_.end() ? 0 : it->second;
}

std::size_t Bm25Index::term_frequency(std::string_view id, std::string_view term) const {
    const auto& counts = tf_[slot(id)];
    auto it = counts.find(term);
    return it == counts.end() ? 0 : it->second;
}

double Bm25Index::idf(std::string_view term) const {
    const double n = static_cast<double>(ids_.size());
    const double df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score(std::string_view query, std::string_view doc_id) const {
    const auto s = slot(doc_id);
    const auto& counts = tf_[s];
    const double norm = 1.0 - params_.b + params_.b * static_cast<double>(lengths_[s]) / avg_len_;
    double total = 0.0;
    for (const auto& term : bm25_tokenize(query)) {
        auto it = counts.find(term);
        if (it == counts.end()) continue;
        const double tf = static_cast<double>(it->second);
        total += idf(term) * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
    }
    return total;
}

std::string exemplar_query(const DialogueSpec& spec) {
    std::string q;
    auto append = [&](const std::string& s) {
        if (!q.empty()) q.push_back(' ');
        q += s;
    };
    for (const auto& b : spec.bios) {
        append(b.entity_name);
        for (const auto& s : b.statements) append(s.text);
    }
    for (const auto* s : quest_statements(spec)) append(s->text);
    for (const auto& p : spec.participants) append(p.name);
    return q;
}

std::vector<ScoredDoc> rank_all(const Bm25Index& index, std::string_view query) {
    std::vector<ScoredDoc> ranked;
    ranked.reserve(index.size());
    for (const auto& id : index.ids()) ranked.push_back({id, index.score(query, id)});
    std::sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    return ranked;
}

std::vector<ScoredDoc> retrieve_exemplars(const Bm25Index& index, const DialogueSpec& spec, std::size_t k) {
    if (k == 0) return {};
    auto ranked = rank_all(index, exemplar_query(spec));
    if (ranked.size() > k) ranked.resize(k);
    return ranked;
}

std::string exemplar_document(const Dialogue& dialogue) {
    std::string out;
    for (const auto& id : linearize_full(dialogue.tree).ids) {
        const auto& n = dialogue.tree.node(id);
        out += n.speaker + ": " + n.text + "\n";
    }
    return out;
}

Bm25Index build_exemplar_index(const std::vector<Dialogue>& pool, Bm25Params params) {
    std::vector<std::pair<std::string, std::string>> docs;
    docs.reserve(pool.size());
    for (const auto& d : pool) docs.emplace_back(d.id, exemplar_document(d));
    return Bm25Index(docs, params);
}

}  // namespace qw
