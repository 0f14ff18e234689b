// Minimal-pair scoring and reporting: run the model over a pair's prefix from
// a zero state, compare the log-probabilities of the two candidate targets at
// the next position, then aggregate success rates by condition, number, and
// distractor count across model seeds.

#pragma once

#include "lmagree/corpus.hpp"
#include "lmagree/lstm.hpp"
#include "lmagree/numerics.hpp"
#include "lmagree/testgen.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace lmagree {

struct PairOutcome {
    MinimalPair pair;
    double log_prob_correct = 0.0;
    double log_prob_incorrect = 0.0;
    bool success = false;  // strictly higher probability for the correct form
    bool tie = false;      // equal probabilities; always counted as failure
};

// First token of the pair (prefix or target) missing from the vocabulary.
inline std::optional<std::string> find_oov(const Vocabulary& vocab, const MinimalPair& pair) {
    for (const std::string& tok : pair.prefix) {
        if (!vocab.contains(tok)) return tok;
    }
    if (!vocab.contains(pair.correct)) return pair.correct;
    if (!vocab.contains(pair.incorrect)) return pair.incorrect;
    return std::nullopt;
}

// Score one pair: a single forward pass over the prefix from a zero state,
// then both targets are read off the same next-token distribution. Success
// requires a strictly higher log-probability for the correct form; exact
// equality sets tie instead. Throws on any out-of-vocabulary token.
template <class S>
PairOutcome score_pair(const ModelParams<S>& params, const Vocabulary& vocab,
                       const MinimalPair& pair) {
    pair.validate();
    if (const auto oov = find_oov(vocab, pair)) {
        throw std::runtime_error("out-of-vocabulary token '" + *oov + "'");
    }
    if (static_cast<Index>(vocab.size()) != params.vocab()) {
        throw std::invalid_argument("score_pair: vocabulary size " +
                                    std::to_string(vocab.size()) +
                                    " does not match model vocabulary " +
                                    std::to_string(params.vocab()));
    }

    IdBlock block;
    block.rows = 1;
    block.cols = static_cast<std::int32_t>(pair.prefix.size());
    block.ids.reserve(pair.prefix.size());
    for (const std::string& tok : pair.prefix) {
        block.ids.push_back(vocab.id(tok));
    }

    Hidden<S> state = Hidden<S>::zeros(params.num_layers(), params.hidden(), 1);
    const std::vector<Mat<S>> logits = forward(params, block, state);
    const Vec<S> last = logits.back().col(0);
    const S lse = log_sum_exp<S>(last);

    PairOutcome out;
    out.pair = pair;
    const S lp_correct = last[vocab.id(pair.correct)] - lse;
    const S lp_incorrect = last[vocab.id(pair.incorrect)] - lse;
    out.log_prob_correct = static_cast<double>(lp_correct);
    out.log_prob_incorrect = static_cast<double>(lp_incorrect);
    out.tie = (lp_correct == lp_incorrect);
    out.success = (lp_correct > lp_incorrect);
    return out;
}

template <class S>
struct SuiteOutcomes {
    std::vector<PairOutcome> outcomes;  // input order; OOV-skipped pairs absent
    Index skipped = 0;                  // lenient mode only
};

// Score a whole suite. Strict mode propagates the first out-of-vocabulary
// error; lenient mode skips such pairs and counts them.
template <class S>
SuiteOutcomes<S> evaluate_suite(const ModelParams<S>& params, const Vocabulary& vocab,
                                const std::vector<MinimalPair>& pairs, bool strict = true) {
    SuiteOutcomes<S> result;
    for (const MinimalPair& pair : pairs) {
        if (!strict && find_oov(vocab, pair)) {
            ++result.skipped;
            continue;
        }
        result.outcomes.push_back(score_pair(params, vocab, pair));
    }
    return result;
}

// One report line. `key` holds the group-key values (by default condition,
// number, distractor count, taken from pair metadata; absent keys become
// empty strings). `seed` is the per-model label, or "MEAN" / "SD" for the
// across-seed summary rows.
struct ReportRow {
    std::vector<std::string> key;
    std::string seed;
    std::int64_t items = 0;
    std::int64_t ties = 0;
    double accuracy = 0.0;
};

struct AccuracyTable {
    std::vector<std::string> group_keys;
    std::vector<ReportRow> rows;  // already in emission order
};

inline const std::vector<std::string>& default_group_keys() {
    static const std::vector<std::string> keys = {"condition", "number",
                                                  "distractor_count"};
    return keys;
}

// Success rates per group cell and seed, with across-seed mean and sample
// standard deviation (zero for a single seed) appended per cell. Ties count
// as failures and are also reported in their own column. Cells are ordered by
// condition (canonical order first), number (sg before pl), then numeric-aware
// distractor count.
AccuracyTable aggregate(
    const std::vector<std::pair<std::string, std::vector<PairOutcome>>>& per_seed,
    const std::vector<std::string>& group_keys = default_group_keys());

enum class ReportFormat { csv, structured };

// CSV: header `<group keys>,seed,items,ties,accuracy`, then the table rows;
// structured: one object per line mirroring the same fields. Both are
// byte-deterministic given the table; accuracies keep full double precision.
void emit_report(std::ostream& out, const AccuracyTable& table, ReportFormat format);
void emit_report(const std::string& path, const AccuracyTable& table, ReportFormat format);

// Reads back the CSV form, preserving row order and exact accuracy values.
AccuracyTable load_report(std::istream& in);
AccuracyTable load_report(const std::string& path);

}  // namespace lmagree
