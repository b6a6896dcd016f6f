#include "qw/tokenizer.hpp"

#include <mutex>

#include "qw/error.hpp"
#include "qw/text.hpp"

namespace qw {

namespace {

bool is_punct(unsigned char c) {
    return (c >= 0x21 && c <= 0x2f) || (c >= 0x3a && c <= 0x40) || (c >= 0x5b && c <= 0x60) ||
           (c >= 0x7b && c <= 0x7e);
}

template <typename Emit>
void scan_tokens(std::string_view text, Emit&& emit) {
    std::size_t begin = 0;
    bool in_word = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (text::is_space(text[i]) || is_punct(c)) {
            if (in_word) emit(text.substr(begin, i - begin));
            in_word = false;
            if (is_punct(c)) emit(text.substr(i, 1));
        } else if (!in_word) {
            in_word = true;
            begin = i;
        }
    }
    if (in_word) emit(text.substr(begin));
}

std::size_t count_whitespace_tokens(std::string_view text) {
    std::size_t n = 0;
    bool in_run = false;
    for (char c : text) {
        if (text::is_space(c)) {
            in_run = false;
        } else if (!in_run) {
            in_run = true;
            ++n;
        }
    }
    return n;
}

}  // namespace

std::vector<std::string> heuristic_tokens(std::string_view text) {
    std::vector<std::string> out;
    scan_tokens(text, [&](std::string_view t) { out.emplace_back(t); });
    return out;
}

std::size_t count_heuristic_tokens(std::string_view text) {
    std::size_t n = 0;
    scan_tokens(text, [&](std::string_view) { ++n; });
    return n;
}

TokenizerRegistry::TokenizerRegistry() {
    counters_.emplace("default", count_heuristic_tokens);
    counters_.emplace("whitespace", count_whitespace_tokens);
}

void TokenizerRegistry::add(std::string id, TokenCounter counter) {
    std::unique_lock lock(mutex_);
    counters_[std::move(id)] = std::move(counter);
}

bool TokenizerRegistry::has(std::string_view id) const {
    std::shared_lock lock(mutex_);
    return counters_.find(id) != counters_.end();
}

std::size_t TokenizerRegistry::count(std::string_view text, std::string_view id) const {
    TokenCounter counter;
    {
        std::shared_lock lock(mutex_);
        auto it = counters_.find(id);
        if (it == counters_.end()) throw Error(ErrorCode::not_found, "unknown tokenizer '" + std::string(id) + "'");
        counter = it->second;
    }
    return counter(text);
}

std::vector<std::string> TokenizerRegistry::ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, fn] : counters_) out.push_back(id);
    return out;
}

TokenizerRegistry& TokenizerRegistry::global() {
    static TokenizerRegistry registry;
    return registry;
}

std::size_t count_tokens(std::string_view text, std::string_view tokenizer_id) {
    return TokenizerRegistry::global().count(text, tokenizer_id);
}

}  // namespace qw
