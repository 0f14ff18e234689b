// Training loop: epoch iteration over truncated-BPTT blocks with clipped SGD,
// per-epoch validation perplexity, annealing of the learning rate whenever
// validation fails to improve, and retention of the best-validation weights.

#pragma once

#include "lmagree/corpus.hpp"
#include "lmagree/lstm.hpp"
#include "lmagree/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmagree {

struct TrainConfig {
    Index num_layers = 2;
    Index embed_dim = 650;
    Index hidden = 650;
    Index batch_size = 128;
    Index bptt_len = 35;
    double dropout = 0.2;
    double lr_initial = 20.0;
    double anneal_factor = 4.0;
    double clip_norm = 0.25;
    Index max_epochs = 40;
    std::uint64_t seed = 0;

    void validate() const {
        if (num_layers < 1 || embed_dim < 1 || hidden < 1) {
            throw std::invalid_argument("config: model dimensions must be positive");
        }
        if (batch_size < 1 || bptt_len < 1 || max_epochs < 1) {
            throw std::invalid_argument("config: batch size, bptt length and epoch count must be positive");
        }
        if (!(dropout >= 0.0 && dropout < 1.0)) {
            throw std::invalid_argument("config: dropout must lie in [0, 1)");
        }
        if (!(lr_initial >= 0.0)) {
            throw std::invalid_argument("config: learning rate must be non-negative");
        }
        if (!(anneal_factor > 1.0)) {
            throw std::invalid_argument("config: anneal factor must exceed 1");
        }
        if (!(clip_norm > 0.0)) {
            throw std::invalid_argument("config: clip norm must be positive");
        }
    }
};

struct EpochStats {
    Index epoch = 0;  // 1-based
    double lr = 0.0;
    double train_loss = 0.0;
    double valid_ppl = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;

    // Header plus one row per epoch; numbers keep full double precision.
    void to_csv(std::ostream& out) const {
        out << "epoch,lr,train_loss,valid_ppl\n";
        for (const EpochStats& e : epochs) {
            out << e.epoch << ',' << format_g17(e.lr) << ',' << format_g17(e.train_loss)
                << ',' << format_g17(e.valid_ppl) << '\n';
        }
    }
};

// Perplexity of `ids` under the model: a single stream is threaded through the
// network in bptt-sized chunks from a zero state, and exp of the mean
// cross-entropy over all n-1 predicted positions is returned.
template <class S>
double perplexity(const ModelParams<S>& params, const std::vector<std::int32_t>& ids,
                  Index bptt_len) {
    if (bptt_len < 1) throw std::invalid_argument("perplexity: bptt length must be positive");
    const Index n = static_cast<Index>(ids.size());
    if (n < 2) {
        throw std::invalid_argument("perplexity: need at least 2 tokens, got " +
                                    std::to_string(n));
    }
    Hidden<S> state = Hidden<S>::zeros(params.num_layers(), params.hidden(), 1);
    long double ce_sum = 0;
    for (Index start = 0; start + 1 < n; start += bptt_len) {
        const Index len = std::min(bptt_len, n - 1 - start);
        BatchBlock block;
        block.input.rows = 1;
        block.input.cols = static_cast<std::int32_t>(len);
        block.input.ids.assign(ids.begin() + start, ids.begin() + start + len);
        block.target.rows = 1;
        block.target.cols = static_cast<std::int32_t>(len);
        block.target.ids.assign(ids.begin() + start + 1, ids.begin() + start + 1 + len);
        ce_sum += block_ce_sum(params, block, state);
    }
    return std::exp(static_cast<double>(ce_sum / static_cast<long double>(n - 1)));
}

template <class S>
struct TrainResult {
    ModelParams<S> params;  // weights from the best-validation epoch
    TrainLog log;
    double best_valid_ppl = 0.0;
    Index best_epoch = 0;
};

// Full training run. Deterministic for a fixed config and corpora; progress
// lines go to `progress` when provided (one line per epoch). vocab_size 0
// means "largest id seen plus one".
template <class S>
TrainResult<S> train(const TrainConfig& config, const EncodedCorpus& train_corpus,
                     const EncodedCorpus& valid_corpus, Index vocab_size = 0,
                     const std::function<void(const EpochStats&)>& progress = {}) {
    config.validate();
    const BatchPlan plan = batchify(train_corpus, static_cast<std::int32_t>(config.batch_size),
                                    static_cast<std::int32_t>(config.bptt_len));

    Index max_seen = 0;
    for (const std::int32_t id : train_corpus.ids) max_seen = std::max<Index>(max_seen, id + 1);
    for (const std::int32_t id : valid_corpus.ids) max_seen = std::max<Index>(max_seen, id + 1);
    const Index vocab = (vocab_size > 0) ? vocab_size : max_seen;
    if (vocab < 1) throw std::invalid_argument("train: empty id streams");
    if (max_seen > vocab) {
        throw std::invalid_argument("train: id streams exceed the stated vocabulary size");
    }

    Rng rng(config.seed);
    ModelParams<S> params =
        ModelParams<S>::sized(vocab, config.embed_dim, config.hidden, config.num_layers);
    params.init_uniform(rng);

    TrainResult<S> result;
    result.params = params;
    double best_ppl = std::numeric_limits<double>::infinity();
    double lr = config.lr_initial;

    for (Index epoch = 1; epoch <= config.max_epochs; ++epoch) {
        Hidden<S> state =
            Hidden<S>::zeros(config.num_layers, config.hidden, config.batch_size);
        double loss_sum = 0;
        double position_count = 0;
        for (const BatchBlock& block : plan.blocks) {
            BlockResult<S> step = loss_and_grads(params, block, state, config.dropout, rng);
            try {
                sgd_step(params, step.grads, static_cast<S>(lr),
                         static_cast<S>(config.clip_norm));
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("epoch " + std::to_string(epoch) + ": " + e.what());
            }
            const double positions =
                static_cast<double>(block.input.rows) * static_cast<double>(block.input.cols);
            loss_sum += static_cast<double>(step.loss) * positions;
            position_count += positions;
        }
        if (!std::isfinite(loss_sum)) {
            throw std::runtime_error("epoch " + std::to_string(epoch) +
                                     ": divergence: non-finite training loss");
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.lr = lr;
        stats.train_loss = loss_sum / position_count;
        stats.valid_ppl = perplexity(params, valid_corpus.ids, config.bptt_len);
        result.log.epochs.push_back(stats);
        if (progress) progress(stats);

        if (stats.valid_ppl < best_ppl) {
            best_ppl = stats.valid_ppl;
            result.params = params;
            result.best_epoch = epoch;
        } else {
            lr /= config.anneal_factor;
        }
    }
    result.best_valid_ppl = best_ppl;
    return result;
}

}  // namespace lmagree
