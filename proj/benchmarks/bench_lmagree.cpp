// Microbenchmarks for the numeric hot paths: dense matmul, softmax, one
// training step (forward + backward over a BPTT block), pair scoring, and
// line normalization/encoding.

#include <benchmark/benchmark.h>

#include "lmagree/corpus.hpp"
#include "lmagree/evaluator.hpp"
#include "lmagree/lstm.hpp"
#include "lmagree/numerics.hpp"

#include <map>
#include <string>
#include <vector>

namespace {

using namespace lmagree;

ModelParams<double> make_params(Index vocab, Index embed, Index hidden, Index layers) {
    Rng rng(7);
    ModelParams<double> p = ModelParams<double>::sized(vocab, embed, hidden, layers);
    p.init_uniform(rng);
    return p;
}

BatchBlock make_block(Index vocab, std::int32_t batch, std::int32_t steps) {
    Rng rng(11);
    BatchBlock block;
    block.input.rows = block.target.rows = batch;
    block.input.cols = block.target.cols = steps;
    for (int i = 0; i < batch * steps; ++i) {
        block.input.ids.push_back(static_cast<std::int32_t>(rng.below(vocab)));
        block.target.ids.push_back(static_cast<std::int32_t>(rng.below(vocab)));
    }
    return block;
}

void bm_matmul(benchmark::State& state) {
    const Index n = state.range(0);
    Rng rng(3);
    Mat<double> a(n, n), b(n, n);
    rng.fill_uniform(a, -1.0, 1.0);
    rng.fill_uniform(b, -1.0, 1.0);
    for (auto _ : state) {
        Mat<double> c = matmul(a, b);
        benchmark::DoNotOptimize(c.data());
    }
}
BENCHMARK(bm_matmul)->Arg(64)->Arg(256);

void bm_softmax(benchmark::State& state) {
    const Index n = state.range(0);
    Rng rng(5);
    Vec<double> z(n);
    for (Index i = 0; i < n; ++i) z[i] = rng.uniform(-10.0, 10.0);
    for (auto _ : state) {
        Vec<double> p = softmax<double>(z);
        benchmark::DoNotOptimize(p.data());
    }
}
BENCHMARK(bm_softmax)->Arg(1000)->Arg(50000);

void bm_train_step(benchmark::State& state) {
    const Index vocab = 200, embed = 64, hidden = 64, layers = 2;
    ModelParams<double> params = make_params(vocab, embed, hidden, layers);
    const BatchBlock block = make_block(vocab, 16, 35);
    Rng rng(13);
    for (auto _ : state) {
        Hidden<double> h = Hidden<double>::zeros(layers, hidden, 16);
        BlockResult<double> r = loss_and_grads(params, block, h, 0.2, rng);
        benchmark::DoNotOptimize(r.loss);
    }
}
BENCHMARK(bm_train_step);

void bm_score_pair(benchmark::State& state) {
    const Index vocab_size = 64;
    std::map<std::string, std::int64_t> counts;
    for (Index i = 0; i < vocab_size - 2; ++i) {
        counts["w" + std::to_string(i)] = 100 - static_cast<int>(i);
    }
    const Vocabulary vocab = Vocabulary::build(counts, vocab_size);
    ModelParams<double> params =
        make_params(static_cast<Index>(vocab.size()), 32, 32, 2);

    MinimalPair pair;
    for (int i = 0; i < 8; ++i) pair.prefix.push_back("w" + std::to_string(i));
    pair.correct = "w20";
    pair.incorrect = "w21";
    for (auto _ : state) {
        PairOutcome out = score_pair(params, vocab, pair);
        benchmark::DoNotOptimize(out.log_prob_correct);
    }
}
BENCHMARK(bm_score_pair);

void bm_normalize_encode(benchmark::State& state) {
    std::map<std::string, std::int64_t> counts;
    const std::string line = "La Robe AVEC les Sacs Était très Bleue , dit-il .";
    for (const std::string& tok : normalize_line(line)) counts[tok] += 100;
    const Vocabulary vocab = Vocabulary::build(counts, 1000);
    for (auto _ : state) {
        std::vector<std::int32_t> ids;
        encode_line(normalize_line(line), vocab, ids);
        benchmark::DoNotOptimize(ids.data());
    }
}
BENCHMARK(bm_normalize_encode);

}  // namespace

BENCHMARK_MAIN();
