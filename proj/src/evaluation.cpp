#include "qw/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>

#include "http_client.hpp"
#include "qw/corpus_json.hpp"
#include "qw/error.hpp"
#include "qw/rng.hpp"
#include "qw/text.hpp"
#include "qw/tokenizer.hpp"

namespace qw {

std::vector<std::string> bleu_tokens(std::string_view text) {
    auto tokens = heuristic_tokens(text);
    for (auto& t : tokens) t = text::to_lower(t);
    return tokens;
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const std::vector<std::string>& tokens, std::size_t n) {
    NgramCounts out;
    if (tokens.size() < n) return out;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++out[std::vector<std::string>(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                                       tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
    return out;
}

double combine(const std::array<std::size_t, 4>& matches, const std::array<std::size_t, 4>& totals,
               std::size_t c, std::size_t r, bool smooth) {
    if (c == 0) return 0.0;
    double log_sum = 0.0;
    for (std::size_t n = 0; n < 4; ++n) {
        double p = totals[n] == 0 ? 0.0 : static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
        if (p == 0.0) {
            if (!smooth) return 0.0;
            p = bleu_epsilon;
        }
        log_sum += std::log(p);
    }
    const double bp = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));
    return bp * std::exp(log_sum / 4.0);
}

}  // namespace

BleuStats bleu_stats(std::string_view candidate, const std::vector<std::string>& references) {
    if (references.empty()) throw Error(ErrorCode::invalid_argument, "BLEU needs at least one reference");
    BleuStats s;
    const auto cand = bleu_tokens(candidate);
    std::vector<std::vector<std::string>> refs;
    for (const auto& r : references) refs.push_back(bleu_tokens(r));

    s.candidate_length = cand.size();
    s.reference_length = refs.front().size();
    for (const auto& r : refs) {
        auto d = [&](std::size_t len) { return len > cand.size() ? len - cand.size() : cand.size() - len; };
        if (d(r.size()) < d(s.reference_length) ||
            (d(r.size()) == d(s.reference_length) && r.size() < s.reference_length))
            s.reference_length = r.size();
    }

    for (std::size_t n = 1; n <= 4; ++n) {
        auto counts = ngrams(cand, n);
        NgramCounts max_ref;
        for (const auto& r : refs)
            for (const auto& [g, k] : ngrams(r, n)) max_ref[g] = std::max(max_ref[g], k);
        for (const auto& [g, k] : counts) {
            s.totals[n - 1] += k;
            auto it = max_ref.find(g);
            if (it != max_ref.end()) s.matches[n - 1] += std::min(k, it->second);
        }
    }
    return s;
}

double bleu4(std::string_view candidate, const std::vector<std::string>& references, bool smooth) {
    auto s = bleu_stats(candidate, references);
    return combine(s.matches, s.totals, s.candidate_length, s.reference_length, smooth);
}

double corpus_bleu4(const std::vector<BleuStats>& stats) {
    std::array<std::size_t, 4> m{}, t{};
    std::size_t c = 0, r = 0;
    for (const auto& s : stats) {
        for (std::size_t n = 0; n < 4; ++n) {
            m[n] += s.matches[n];
            t[n] += s.totals[n];
        }
        c += s.candidate_length;
        r += s.reference_length;
    }
    return combine(m, t, c, r, false);
}

ReferenceSets reference_sets(const GenerationTask& task) {
    if (!task.gold_target) throw Error(ErrorCode::invalid_argument, "task '" + task.item_id + "' has no gold target");
    ReferenceSets sets;
    sets.gold.push_back(task.gold_target->text);
    for (const auto* s : quest_statements(task.spec)) sets.quest.push_back(s->text);
    for (const auto* s : bio_statements(task.spec)) sets.bio.push_back(s->text);
    return sets;
}

double HttpScorer::score(const std::string& candidate, const std::vector<std::string>& references) {
    nlohmann::json req = {{"candidate", candidate}, {"references", references}};
    auto res = detail::post_json(base_url_, "/score", req.dump(), {}, timeout_);
    if (res.status != 200)
        throw Error(ErrorCode::backend_failure, "scorer returned " + std::to_string(res.status));
    try {
        return nlohmann::json::parse(res.body).at("score").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::backend_failure, std::string("malformed scorer response: ") + e.what());
    }
}

Interval bootstrap_ci(const std::vector<double>& scores, std::size_t resamples, double level, std::uint64_t seed) {
    if (scores.empty()) throw Error(ErrorCode::invalid_argument, "bootstrap needs at least one score");
    if (!(level > 0.0 && level < 1.0)) throw Error(ErrorCode::invalid_argument, "confidence level must be in (0, 1)");
    if (resamples == 0) throw Error(ErrorCode::invalid_argument, "bootstrap needs at least one resample");

    const std::size_t n = scores.size();
    Interval out;
    out.mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(n);

    Rng rng(seed);
    std::vector<double> means(resamples);
    for (auto& m : means) {
        double sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) sum += scores[rng.index(n)];
        m = sum / static_cast<double>(n);
    }
    std::sort(means.begin(), means.end());
    auto quantile = [&](double p) {
        const double h = p * static_cast<double>(resamples - 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const auto hi = std::min(lo + 1, resamples - 1);
        return means[lo] + (h - static_cast<double>(lo)) * (means[hi] - means[lo]);
    };
    const double alpha = (1.0 - level) / 2.0;
    out.lo = std::min(quantile(alpha), out.mean);
    out.hi = std::max(quantile(1.0 - alpha), out.mean);
    return out;
}

MetricReport evaluate_nup(const std::vector<NupResult>& results, ExternalScorer* scorer, const EvalOptions& options) {
    MetricReport report;
    report.options = options;
    report.item_count = results.size();
    report.items.resize(results.size());
    if (scorer) report.scorer = scorer->name();

    std::vector<BleuStats> gold_stats(results.size());
    std::vector<std::optional<BleuStats>> quest_stats(results.size()), bio_stats(results.size());

    auto score_item = [&](std::size_t i) {
        const auto& r = results[i];
        const auto refs = reference_sets(r.task);
        auto& item = report.items[i];
        item.item_id = r.task.item_id;
        item.candidate = r.candidate;
        item.bleu_gold = bleu4(r.candidate, refs.gold, options.smooth);
        gold_stats[i] = bleu_stats(r.candidate, refs.gold);
        if (!refs.quest.empty()) {
            item.bleu_quest = bleu4(r.candidate, refs.quest, options.smooth);
            quest_stats[i] = bleu_stats(r.candidate, refs.quest);
        }
        if (!refs.bio.empty()) {
            item.bleu_bio = bleu4(r.candidate, refs.bio, options.smooth);
            bio_stats[i] = bleu_stats(r.candidate, refs.bio);
        }
        if (scorer) {
            try {
                const double s = scorer->score(r.candidate, refs.gold);
                if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorCode::out_of_range, "semantic score outside [0, 1]");
                item.semantic = s;
            } catch (const std::exception& e) {
                item.semantic_error = e.what();
            }
        }
    };

    for (const auto& r : results)
        if (!r.task.gold_target)
            throw Error(ErrorCode::invalid_argument, "task '" + r.task.item_id + "' has no gold target");

    const std::size_t jobs = std::clamp<std::size_t>(options.jobs, 1, std::max<std::size_t>(results.size(), 1));
    if (jobs == 1) {
        for (std::size_t i = 0; i < results.size(); ++i) score_item(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> workers;
        for (std::size_t w = 0; w < jobs; ++w)
            workers.emplace_back([&] {
                for (auto i = next.fetch_add(1); i < results.size(); i = next.fetch_add(1)) score_item(i);
            });
        for (auto& t : workers) t.join();
    }

    auto summarize = [&](std::uint64_t stream, const std::vector<double>& scores,
                         const std::vector<BleuStats>* pooled) -> std::optional<ColumnSummary> {
        if (scores.empty()) return std::nullopt;
        ColumnSummary c;
        c.n = scores.size();
        c.sentence = bootstrap_ci(scores, options.resamples, options.level, Rng::derive(options.seed, stream));
        if (pooled) c.corpus_bleu = corpus_bleu4(*pooled);
        return c;
    };

    std::vector<double> g, q, b, s;
    std::vector<BleuStats> qs, bs;
    for (std::size_t i = 0; i < report.items.size(); ++i) {
        const auto& item = report.items[i];
        g.push_back(item.bleu_gold);
        if (item.bleu_quest) {
            q.push_back(*item.bleu_quest);
            qs.push_back(*quest_stats[i]);
        }
        if (item.bleu_bio) {
            b.push_back(*item.bleu_bio);
            bs.push_back(*bio_stats[i]);
        }
        if (item.semantic) s.push_back(*item.semantic);
        if (item.semantic_error) ++report.scorer_errors;
    }
    report.gold = summarize(0, g, &gold_stats);
    report.quest = summarize(1, q, &qs);
    report.bio = summarize(2, b, &bs);
    if (scorer) report.semantic = summarize(3, s, nullptr);
    return report;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json column_json(const std::optional<ColumnSummary>& c) {
    if (!c) return nullptr;
    return {{"n", c->n},
            {"mean", c->sentence.mean},
            {"ci_lo", c->sentence.lo},
            {"ci_hi", c->sentence.hi},
            {"corpus_bleu", opt(c->corpus_bleu)}};
}

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

}  // namespace

void to_json(nlohmann::json& j, const MetricReport& r) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& it : r.items) {
        nlohmann::json x = {{"item_id", it.item_id},
                            {"candidate", it.candidate},
                            {"bleu_gold", it.bleu_gold},
                            {"bleu_quest", opt(it.bleu_quest)},
                            {"bleu_bio", opt(it.bleu_bio)}};
        if (r.scorer) {
            x["semantic"] = opt(it.semantic);
            if (it.semantic_error) x["semantic_error"] = *it.semantic_error;
        }
        items.push_back(std::move(x));
    }
    nlohmann::json columns = {{"gold", column_json(r.gold)},
                              {"quest", column_json(r.quest)},
                              {"bio", column_json(r.bio)}};
    if (r.scorer) columns["semantic"] = column_json(r.semantic);
    j = {{"item_count", r.item_count},
         {"items", std::move(items)},
         {"columns", std::move(columns)},
         {"bootstrap", {{"resamples", r.options.resamples}, {"level", r.options.level}, {"seed", r.options.seed}}},
         {"smoothed", r.options.smooth}};
    if (r.scorer) {
        j["scorer"] = *r.scorer;
        j["scorer_errors"] = r.scorer_errors;
    }
}

std::string render_table(const MetricReport& r) {
    std::vector<std::array<std::string, 6>> rows;
    rows.push_back({"reference", "n", "mean", "ci_lo", "ci_hi", "corpus"});
    auto add = [&](const char* name, const std::optional<ColumnSummary>& c) {
        if (!c) {
            rows.push_back({name, "0", "-", "-", "-", "-"});
            return;
        }
        rows.push_back({name, std::to_string(c->n), fixed(c->sentence.mean), fixed(c->sentence.lo),
                        fixed(c->sentence.hi), c->corpus_bleu ? fixed(*c->corpus_bleu) : "-"});
    };
    add("gold", r.gold);
    add("quest", r.quest);
    add("bio", r.bio);
    if (r.scorer) add("semantic", r.semantic);

    std::array<std::size_t, 6> width{};
    for (const auto& row : rows)
        for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
    std::ostringstream out;
    out << "items: " << r.item_count << "\n";
    for (const auto& row : rows) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            if (c == 0) {
                out << row[c] << std::string(width[c] - row[c].size(), ' ');
            } else {
                out << "  " << std::string(width[c] - row[c].size(), ' ') << row[c];
            }
        }
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Judgments

namespace {

constexpr std::pair<Criterion, const char*> criterion_names[] = {
    {Criterion::coherence, "coherence"},
    {Criterion::nonviolation, "nonviolation"},
    {Criterion::bio_usage, "bio_usage"},
    {Criterion::quest_usage, "quest_usage"},
    {Criterion::content_suggestion, "content_suggestion"},
    {Criterion::engagingness, "engagingness"},
};

std::vector<std::string> csv_fields(std::string_view line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (quoted) throw Error(ErrorCode::parse_error, "unterminated quote in CSV line");
    out.push_back(std::move(cur));
    return out;
}

JudgmentRecord make_record(const std::map<std::string, std::string>& f, const std::string& where) {
    auto get = [&](const char* key) -> std::string {
        auto it = f.find(key);
        return it == f.end() ? std::string() : std::string(text::trim(it->second));
    };
    auto fail = [&](const std::string& msg) { return Error(ErrorCode::parse_error, where + ": " + msg); };

    JudgmentRecord r;
    r.item_id = get("item_id");
    auto crit = criterion_from_string(get("criterion"));
    if (!crit) throw fail("unknown criterion '" + get("criterion") + "'");
    r.criterion = *crit;
    const auto kind = get("kind");
    if (kind == "likert") {
        r.kind = JudgmentRecord::Kind::likert;
        r.system = get("system");
        const auto s = get("score");
        if (s.size() != 1 || s[0] < '1' || s[0] > '4') throw fail("likert score must be 1..4, got '" + s + "'");
        r.score = s[0] - '0';
    } else if (kind == "pairwise") {
        r.kind = JudgmentRecord::Kind::pairwise;
        r.system_a = get("system_a");
        r.system_b = get("system_b");
        if (r.system_a.empty() || r.system_b.empty() || r.system_a == r.system_b)
            throw fail("pairwise records need two distinct systems");
        const auto w = text::to_lower(get("winner"));
        if (w == "a") {
            r.winner = Winner::a;
        } else if (w == "b") {
            r.winner = Winner::b;
        } else if (w == "tie") {
            r.winner = Winner::tie;
        } else {
            throw fail("winner must be A, B or tie");
        }
    } else {
        throw fail("kind must be likert or pairwise");
    }
    return r;
}

}  // namespace

const char* to_string(Criterion c) noexcept {
    for (const auto& [k, name] : criterion_names)
        if (k == c) return name;
    return "?";
}

std::optional<Criterion> criterion_from_string(std::string_view s) noexcept {
    for (const auto& [k, name] : criterion_names)
        if (s == name) return k;
    return std::nullopt;
}

std::vector<JudgmentRecord> parse_judgments_csv(std::string_view input) {
    auto lines = text::split_lines(input);
    std::vector<JudgmentRecord> out;
    std::vector<std::string> header;
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
        std::string line = lines[ln];
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (text::trim(line).empty()) continue;
        auto fields = csv_fields(line);
        if (header.empty()) {
            for (auto& h : fields) h = std::string(text::trim(h));
            header = std::move(fields);
            continue;
        }
        if (fields.size() != header.size())
            throw Error(ErrorCode::parse_error, "line " + std::to_string(ln + 1) + ": expected " +
                                                    std::to_string(header.size()) + " fields");
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields[i];
        out.push_back(make_record(row, "line " + std::to_string(ln + 1)));
    }
    return out;
}

std::vector<JudgmentRecord> parse_judgments_json(const nlohmann::json& j) {
    if (!j.is_array()) throw Error(ErrorCode::parse_error, "judgments must be a JSON array");
    std::vector<JudgmentRecord> out;
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_object()) throw Error(ErrorCode::parse_error, "record " + std::to_string(i) + " is not an object");
        std::map<std::string, std::string> row;
        for (const auto& [k, v] : j[i].items()) row[k] = v.is_string() ? v.get<std::string>() : v.dump();
        out.push_back(make_record(row, "record " + std::to_string(i)));
    }
    return out;
}

std::map<std::pair<std::string, Criterion>, LikertCell> likert_aggregate(const std::vector<JudgmentRecord>& records,
                                                                         std::size_t resamples, double level,
                                                                         std::uint64_t seed) {
    std::map<std::pair<std::string, Criterion>, std::vector<double>> scores;
    for (const auto& r : records) {
        if (r.kind != JudgmentRecord::Kind::likert)
            throw Error(ErrorCode::invalid_argument, "likert aggregation got a pairwise record");
        if (r.score < 1 || r.score > 4) throw Error(ErrorCode::out_of_range, "likert score must be 1..4");
        scores[{r.system, r.criterion}].push_back(r.score);
    }
    std::map<std::pair<std::string, Criterion>, LikertCell> out;
    std::uint64_t stream = 0;
    for (const auto& [key, s] : scores) {
        out[key] = {s.size(), bootstrap_ci(s, resamples, level, Rng::derive(seed, stream++))};
    }
    return out;
}

std::string format_win_percent(std::size_t wins, std::size_t comparisons) {
    if (comparisons == 0) throw Error(ErrorCode::invalid_argument, "no comparisons");
    const std::uint64_t num = static_cast<std::uint64_t>(wins) * 1000;
    std::uint64_t tenths = num / comparisons;
    const std::uint64_t rem = num % comparisons;
    if (2 * rem > comparisons || (2 * rem == comparisons && tenths % 2 == 1)) ++tenths;
    return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

std::map<std::pair<std::string, Criterion>, WinCell> pairwise_winrates(const std::vector<JudgmentRecord>& records) {
    std::map<std::pair<std::string, Criterion>, WinCell> cells;
    for (const auto& r : records) {
        if (r.kind != JudgmentRecord::Kind::pairwise)
            throw Error(ErrorCode::invalid_argument, "win rates got a likert record");
        auto& a = cells[{r.system_a, r.criterion}];
        auto& b = cells[{r.system_b, r.criterion}];
        if (r.winner == Winner::tie) {
            ++a.ties;
            ++b.ties;
            continue;
        }
        ++a.comparisons;
        ++b.comparisons;
        ++(r.winner == Winner::a ? a : b).wins;
    }
    for (auto it = cells.begin(); it != cells.end();) {
        if (it->second.comparisons == 0) {
            it = cells.erase(it);
            continue;
        }
        auto& c = it->second;
        c.formatted = format_win_percent(c.wins, c.comparisons);
        c.percent = std::stod(c.formatted);
        ++it;
    }
    return cells;
}

nlohmann::json likert_json(const std::map<std::pair<std::string, Criterion>, LikertCell>& cells) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [key, c] : cells)
        out.push_back({{"system", key.first},
                       {"criterion", to_string(key.second)},
                       {"n", c.n},
                       {"mean", c.ci.mean},
                       {"ci_lo", c.ci.lo},
                       {"ci_hi", c.ci.hi}});
    return out;
}

nlohmann::json winrate_json(const std::map<std::pair<std::string, Criterion>, WinCell>& cells) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& [key, c] : cells)
        out.push_back({{"system", key.first},
                       {"criterion", to_string(key.second)},
                       {"wins", c.wins},
                       {"comparisons", c.comparisons},
                       {"ties", c.ties},
                       {"percent", c.formatted}});
    return out;
}

// ---------------------------------------------------------------------------
// Agreement

Agreement annotation_agreement(const AnnotationMap& a, const AnnotationMap& b) {
    if (a.empty() && b.empty()) throw Error(ErrorCode::invalid_argument, "no annotated nodes to compare");
    if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin(), [](const auto& x, const auto& y) {
            return x.first == y.first;
        }))
        throw Error(ErrorCode::invalid_argument, "annotation maps cover different node sets");

    Agreement out;
    out.nodes = a.size();
    double em = 0.0, jac = 0.0;
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        const auto& x = ia->second;
        const auto& y = ib->second;
        std::vector<FactRef> inter;
        std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(inter));
        const std::size_t uni = x.size() + y.size() - inter.size();
        em += x == y ? 1.0 : 0.0;
        jac += uni == 0 ? 1.0 : static_cast<double>(inter.size()) / static_cast<double>(uni);
    }
    out.em_avg = em / static_cast<double>(out.nodes);
    out.jaccard_avg = jac / static_cast<double>(out.nodes);
    return out;
}

AnnotationMap parse_annotations(const nlohmann::json& j) {
    AnnotationMap out;
    try {
        if (j.is_object() && j.contains("dialogues")) {
            Corpus c = j.get<Corpus>();
            for (const auto& d : c.dialogues)
                for (const auto& [id, node] : d.tree.nodes)
                    out[d.id + "/" + id] = std::set<FactRef>(node.support_facts.begin(), node.support_facts.end());
            return out;
        }
        if (!j.is_object()) throw Error(ErrorCode::parse_error, "annotations must be a JSON object");
        for (const auto& [node, facts] : j.items()) {
            auto& set = out[node];
            for (const auto& f : facts) set.insert(f.get<FactRef>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::parse_error, std::string("malformed annotations: ") + e.what());
    }
    return out;
}

}  // namespace qw
