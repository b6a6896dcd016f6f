#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace qw {

using TokenCounter = std::function<std::size_t(std::string_view)>;

// Named token counters. Budgets are expressed in the units of whichever
// counter a prompt config names. "default" and "whitespace" are built in.
class TokenizerRegistry {
  public:
    TokenizerRegistry();

    void add(std::string id, TokenCounter counter);
    bool has(std::string_view id) const;
    // Throws Error(not_found) for an unregistered id.
    std::size_t count(std::string_view text, std::string_view id) const;
    std::vector<std::string> ids() const;

    static TokenizerRegistry& global();

  private:
    mutable std::shared_mutex mutex_;
    std::map<std::string, TokenCounter, std::less<>> counters_;
};

// Default heuristic: whitespace separates runs; inside a run every ASCII
// punctuation character is its own token and the spans between them are
// tokens too.
std::vector<std::string> heuristic_tokens(std::string_view text);
std::size_t count_heuristic_tokens(std::string_view text);

std::size_t count_tokens(std::string_view text, std::string_view tokenizer_id = "default");

}  // namespace qw
