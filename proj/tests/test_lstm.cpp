#include "doctest.h"

#include <lmagree/lstm.hpp>

#include <cmath>
#include <vector>

using namespace lmagree;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Step-by-step scalar reference of one LSTM cell for a single batch column,
// written with plain loops so it shares nothing with the production kernel.
struct CellRef {
    std::vector<double> h, c;
};

CellRef cell_oracle(const LstmLayer<double>& layer, const std::vector<double>& x,
                    const std::vector<double>& h, const std::vector<double>& c) {
    const int hd = static_cast<int>(layer.w_rec.cols());
    const int in = static_cast<int>(layer.w_in.cols());
    std::vector<double> z(4 * hd, 0.0);
    for (int r = 0; r < 4 * hd; ++r) {
        double acc = layer.bias[r];
        for (int k = 0; k < in; ++k) acc += layer.w_in(r, k) * x[k];
        for (int k = 0; k < hd; ++k) acc += layer.w_rec(r, k) * h[k];
        z[r] = acc;
    }
    CellRef out;
    out.h.resize(hd);
    out.c.resize(hd);
    for (int u = 0; u < hd; ++u) {
        const double i = sig(z[u]);
        const double f = sig(z[hd + u]);
        const double g = std::tanh(z[2 * hd + u]);
        const double o = sig(z[3 * hd + u]);
        out.c[u] = f * c[u] + i * g;
        out.h[u] = o * std::tanh(out.c[u]);
    }
    return out;
}

// Full-network reference for a single stream: embedding row in, stacked cells,
// output projection. Returns one logit vector per step.
std::vector<std::vector<double>> forward_oracle(const ModelParams<double>& m,
                                                const std::vector<int>& ids) {
    const int L = static_cast<int>(m.num_layers());
    const int hd = static_cast<int>(m.hidden());
    const int v = static_cast<int>(m.vocab());
    std::vector<std::vector<double>> hs(L, std::vector<double>(hd, 0.0));
    std::vector<std::vector<double>> cs(L, std::vector<double>(hd, 0.0));
    std::vector<std::vector<double>> logits;
    for (const int id : ids) {
        std::vector<double> x(m.embed_dim());
        for (int e = 0; e < m.embed_dim(); ++e) x[e] = m.embedding(id, e);
        for (int l = 0; l < L; ++l) {
            CellRef next = cell_oracle(m.layers[l], x, hs[l], cs[l]);
            hs[l] = next.h;
            cs[l] = next.c;
            x = next.h;
        }
        std::vector<double> z(v);
        for (int r = 0; r < v; ++r) {
            double acc = m.b_out[r];
            for (int k = 0; k < hd; ++k) acc += m.w_out(r, k) * hs[L - 1][k];
            z[r] = acc;
        }
        logits.push_back(std::move(z));
    }
    return logits;
}

ModelParams<double> random_model(Index v, Index e, Index hd, Index l, std::uint64_t seed) {
    ModelParams<double> m = ModelParams<double>::sized(v, e, hd, l);
    Rng rng(seed);
    m.visit([&](auto& block) { rng.fill_uniform(block, -0.8, 0.8); });
    return m;
}

IdBlock make_block(std::initializer_list<std::int32_t> ids, std::int32_t rows,
                   std::int32_t cols) {
    IdBlock b;
    b.rows = rows;
    b.cols = cols;
    b.ids.assign(ids.begin(), ids.end());
    return b;
}

}  // namespace

TEST_CASE("lstm_cell: zero weights and state give zero output") {
    LstmLayer<double> layer{Mat<double>::Zero(8, 3), Mat<double>::Zero(8, 2),
                            Vec<double>::Zero(8)};
    Mat<double> x = Mat<double>::Zero(3, 1);
    Mat<double> h = Mat<double>::Zero(2, 1), c = Mat<double>::Zero(2, 1);
    Mat<double> h2, c2;
    lstm_cell(layer, x, h, c, h2, c2);
    CHECK(h2.cwiseAbs().maxCoeff() == 0.0);
    CHECK(c2.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm_cell: a saturated forget gate preserves the cell") {
    LstmLayer<double> layer{Mat<double>::Zero(4, 1), Mat<double>::Zero(4, 1),
                            Vec<double>::Zero(4)};
    layer.bias[1] = 40.0;  // forget-gate row of the [i,f,g,o] stack
    Mat<double> x = Mat<double>::Zero(1, 1);
    Mat<double> h = Mat<double>::Zero(1, 1);
    Mat<double> c(1, 1);
    c(0, 0) = 1.0;
    Mat<double> h2, c2;
    lstm_cell(layer, x, h, c, h2, c2);
    CHECK(c2(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lstm_cell: 100 random instances match the scalar reference to 1e-12") {
    Rng dims(404);
    for (int trial = 0; trial < 100; ++trial) {
        const int hd = 1 + static_cast<int>(dims.below(4));
        const int in = 1 + static_cast<int>(dims.below(4));
        const int batch = 1 + static_cast<int>(dims.below(3));
        LstmLayer<double> layer{Mat<double>(4 * hd, in), Mat<double>(4 * hd, hd),
                                Vec<double>(4 * hd)};
        Rng rng(1000 + trial);
        rng.fill_uniform(layer.w_in, -1.0, 1.0);
        rng.fill_uniform(layer.w_rec, -1.0, 1.0);
        rng.fill_uniform(layer.bias, -1.0, 1.0);
        Mat<double> x(in, batch), h(hd, batch), c(hd, batch);
        rng.fill_uniform(x, -1.0, 1.0);
        rng.fill_uniform(h, -1.0, 1.0);
        rng.fill_uniform(c, -1.0, 1.0);

        Mat<double> h2, c2;
        lstm_cell(layer, x, h, c, h2, c2);

        for (int b = 0; b < batch; ++b) {
            std::vector<double> xv(in), hv(hd), cv(hd);
            for (int k = 0; k < in; ++k) xv[k] = x(k, b);
            for (int k = 0; k < hd; ++k) hv[k] = h(k, b);
            for (int k = 0; k < hd; ++k) cv[k] = c(k, b);
            const CellRef want = cell_oracle(layer, xv, hv, cv);
            for (int u = 0; u < hd; ++u) {
                CHECK(std::abs(h2(u, b) - want.h[u]) < 1e-12);
                CHECK(std::abs(c2(u, b) - want.c[u]) < 1e-12);
            }
        }
    }
}

TEST_CASE("lstm_cell: dimension mismatches throw") {
    LstmLayer<double> layer{Mat<double>::Zero(8, 3), Mat<double>::Zero(8, 2),
                            Vec<double>::Zero(8)};
    Mat<double> x = Mat<double>::Zero(2, 1);  // expects 3 input rows
    Mat<double> h = Mat<double>::Zero(2, 1), c = Mat<double>::Zero(2, 1);
    Mat<double> h2, c2;
    CHECK_THROWS_AS(lstm_cell(layer, x, h, c, h2, c2), std::invalid_argument);
}

TEST_CASE("forward: zero parameters predict uniformly, loss ln|V|") {
    const Index v = 17;
    ModelParams<double> m = ModelParams<double>::sized(v, 4, 5, 2);
    BatchBlock block;
    block.input = make_block({3, 1, 4, 1, 5, 9}, 2, 3);
    block.target = make_block({1, 4, 1, 5, 9, 2}, 2, 3);
    Hidden<double> state = Hidden<double>::zeros(2, 5, 2);
    const double loss = block_loss(m, block, state);
    CHECK(std::abs(loss - std::log(double(v))) < 1e-9);
}

TEST_CASE("forward: multi-step logits match the scalar reference to 1e-12") {
    for (int trial = 0; trial < 20; ++trial) {
        const Index layers = 1 + (trial % 2);
        ModelParams<double> m = random_model(5, 3, 4, layers, 5000 + trial);
        const std::vector<int> ids{trial % 5, (trial + 2) % 5, (trial + 4) % 5};
        IdBlock input = make_block({}, 1, 3);
        for (const int id : ids) input.ids.push_back(id);

        Hidden<double> state = Hidden<double>::zeros(layers, 4, 1);
        const std::vector<Mat<double>> got = forward(m, input, state);
        const auto want = forward_oracle(m, ids);
        REQUIRE(got.size() == want.size());
        for (std::size_t t = 0; t < want.size(); ++t) {
            for (std::size_t r = 0; r < want[t].size(); ++r) {
                CHECK(std::abs(got[t](Index(r), 0) - want[t][r]) < 1e-12);
            }
        }
    }
}

TEST_CASE("forward: batched streams equal independent single-stream runs") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 77);
    IdBlock both = make_block({1, 2, 3, 4, 5, 0}, 2, 3);
    Hidden<double> state = Hidden<double>::zeros(2, 4, 2);
    const auto batched = forward(m, both, state);

    for (std::int32_t r = 0; r < 2; ++r) {
        IdBlock solo = make_block({}, 1, 3);
        for (std::int32_t t = 0; t < 3; ++t) solo.ids.push_back(both.at(r, t));
        Hidden<double> s1 = Hidden<double>::zeros(2, 4, 1);
        const auto single = forward(m, solo, s1);
        for (std::size_t t = 0; t < single.size(); ++t) {
            CHECK((batched[t].col(r) - single[t].col(0)).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("forward: state carries across consecutive blocks") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 78);
    IdBlock whole = make_block({1, 2, 3, 4}, 1, 4);
    Hidden<double> s_whole = Hidden<double>::zeros(2, 4, 1);
    const auto full = forward(m, whole, s_whole);

    IdBlock first = make_block({1, 2}, 1, 2), second = make_block({3, 4}, 1, 2);
    Hidden<double> s_split = Hidden<double>::zeros(2, 4, 1);
    const auto a = forward(m, first, s_split);
    const auto b = forward(m, second, s_split);
    CHECK((full[2] - b[0]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((full[3] - b[1]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("forward: invalid token ids and state shapes are rejected") {
    ModelParams<double> m = ModelParams<double>::sized(5, 3, 4, 2);
    IdBlock bad_id = make_block({0, 5}, 1, 2);
    Hidden<double> state = Hidden<double>::zeros(2, 4, 1);
    CHECK_THROWS_AS(forward(m, bad_id, state), std::out_of_range);

    IdBlock ok = make_block({0, 1}, 1, 2);
    Hidden<double> wrong = Hidden<double>::zeros(2, 4, 3);
    CHECK_THROWS_AS(forward(m, ok, wrong), std::invalid_argument);
}

TEST_CASE("forward: zero dropout in training mode equals evaluation mode") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 79);
    IdBlock input = make_block({1, 2, 3}, 1, 3);
    Rng rng(1);
    Hidden<double> s1 = Hidden<double>::zeros(2, 4, 1);
    Hidden<double> s2 = Hidden<double>::zeros(2, 4, 1);
    const auto train_mode = forward(m, input, s1, DropoutCtx{0.0, &rng});
    const auto eval_mode = forward(m, input, s2);
    for (std::size_t t = 0; t < eval_mode.size(); ++t) {
        CHECK((train_mode[t] - eval_mode[t]).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("forward: active dropout is seed-deterministic and changes the output") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 80);
    IdBlock input = make_block({1, 2, 3}, 1, 3);

    Rng r1(9), r2(9), r3(10);
    Hidden<double> s1 = Hidden<double>::zeros(2, 4, 1);
    Hidden<double> s2 = Hidden<double>::zeros(2, 4, 1);
    Hidden<double> s3 = Hidden<double>::zeros(2, 4, 1);
    Hidden<double> s4 = Hidden<double>::zeros(2, 4, 1);
    const auto a = forward(m, input, s1, DropoutCtx{0.5, &r1});
    const auto b = forward(m, input, s2, DropoutCtx{0.5, &r2});
    const auto eval_mode = forward(m, input, s3);
    const auto c = forward(m, input, s4, DropoutCtx{0.5, &r3});

    double same = 0, diff = 0;
    for (std::size_t t = 0; t < a.size(); ++t) {
        same = std::max(same, (a[t] - b[t]).cwiseAbs().maxCoeff());
        diff = std::max(diff, (a[t] - eval_mode[t]).cwiseAbs().maxCoeff());
    }
    CHECK(same == 0.0);
    CHECK(diff > 1e-6);
    (void)c;
}

TEST_CASE("loss_and_grads: symmetric uniform case has exactly zero gradient") {
    // Zero parameters give uniform predictions; targets covering each word
    // equally often put the loss at a stationary point.
    ModelParams<double> m = ModelParams<double>::sized(4, 3, 2, 1);
    BatchBlock block;
    block.input = make_block({0, 0, 0, 0}, 1, 4);
    block.target = make_block({0, 1, 2, 3}, 1, 4);
    Hidden<double> state = Hidden<double>::zeros(1, 2, 1);
    Rng rng(0);
    BlockResult<double> res = loss_and_grads(m, block, state, 0.0, rng);
    CHECK(res.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(res.grads.squared_norm() == 0.0);
}

TEST_CASE("loss_and_grads: analytic gradients pass a central-difference check") {
    const Index v = 8, e = 3, hd = 4, layers = 2;
    ModelParams<double> m = random_model(v, e, hd, layers, 2024);
    BatchBlock block;
    block.input = make_block({1, 2, 3, 4, 5, 6}, 2, 3);
    block.target = make_block({2, 3, 0, 5, 6, 7}, 2, 3);

    Hidden<double> state = Hidden<double>::zeros(layers, hd, 2);
    Rng rng(0);
    BlockResult<double> res = loss_and_grads(m, block, state, 0.0, rng);

    const double positions = 6.0;
    auto probe = [&](const Vec<double>& flat) -> long double {
        ModelParams<long double> p = ModelParams<long double>::sized(v, e, hd, layers);
        p.assign_from_flat(flat);
        Hidden<long double> s = Hidden<long double>::zeros(layers, hd, 2);
        return block_ce_sum(p, block, s) / static_cast<long double>(positions);
    };
    const double err = finite_diff_check(probe, m.flatten(), res.grads.flatten(), 1e-5);
    CHECK(err < 1e-4);
}

TEST_CASE("loss_and_grads: loss agrees with the evaluation-mode block loss") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 81);
    BatchBlock block;
    block.input = make_block({1, 2, 3, 4}, 2, 2);
    block.target = make_block({2, 3, 4, 5}, 2, 2);
    Hidden<double> s1 = Hidden<double>::zeros(2, 4, 2);
    Hidden<double> s2 = Hidden<double>::zeros(2, 4, 2);
    Rng rng(0);
    BlockResult<double> res = loss_and_grads(m, block, s1, 0.0, rng);
    const double eval_loss = block_loss(m, block, s2);
    CHECK(std::abs(res.loss - eval_loss) < 1e-12);
}

TEST_CASE("loss_and_grads: identical seeds give bit-identical gradients") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 82);
    BatchBlock block;
    block.input = make_block({1, 2, 3, 4, 5, 0}, 2, 3);
    block.target = make_block({2, 3, 4, 5, 0, 1}, 2, 3);

    Rng r1(31), r2(31);
    Hidden<double> s1 = Hidden<double>::zeros(2, 4, 2);
    Hidden<double> s2 = Hidden<double>::zeros(2, 4, 2);
    BlockResult<double> a = loss_and_grads(m, block, s1, 0.4, r1);
    BlockResult<double> b = loss_and_grads(m, block, s2, 0.4, r2);
    CHECK(a.loss == b.loss);
    const Vec<double> fa = a.grads.flatten(), fb = b.grads.flatten();
    REQUIRE(fa.size() == fb.size());
    for (Index i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);
}

TEST_CASE("loss_and_grads: gradients depend only on the carried-in state values") {
    ModelParams<double> m = random_model(6, 3, 4, 2, 83);
    IdBlock warmup = make_block({5, 4, 3}, 1, 3);
    BatchBlock block;
    block.input = make_block({1, 2}, 1, 2);
    block.target = make_block({2, 3}, 1, 2);

    // Path A: run a preceding block, then take gradients.
    Hidden<double> sa = Hidden<double>::zeros(2, 4, 1);
    forward(m, warmup, sa);
    Hidden<double> sa_copy = sa;
    Rng r1(0);
    BlockResult<double> a = loss_and_grads(m, block, sa, 0.0, r1);

    // Path B: inject the same state values directly.
    Rng r2(0);
    BlockResult<double> b = loss_and_grads(m, block, sa_copy, 0.0, r2);
    const Vec<double> fa = a.grads.flatten(), fb = b.grads.flatten();
    for (Index i = 0; i < fa.size(); ++i) CHECK(fa[i] == fb[i]);
}

TEST_CASE("loss_and_grads: mismatched target shape and empty block throw") {
    ModelParams<double> m = ModelParams<double>::sized(5, 3, 4, 1);
    Hidden<double> state = Hidden<double>::zeros(1, 4, 1);
    Rng rng(0);
    BatchBlock bad;
    bad.input = make_block({1, 2}, 1, 2);
    bad.target = make_block({1}, 1, 1);
    CHECK_THROWS_AS(loss_and_grads(m, bad, state, 0.0, rng), std::invalid_argument);

    BatchBlock empty;
    CHECK_THROWS_AS(loss_and_grads(m, empty, state, 0.0, rng), std::invalid_argument);
    Hidden<double> s2 = Hidden<double>::zeros(1, 4, 1);
    CHECK_THROWS_AS(block_loss(m, empty, s2), std::invalid_argument);
}

TEST_CASE("sgd_step: zero gradients leave parameters untouched") {
    ModelParams<double> m = random_model(5, 3, 4, 2, 84);
    const Vec<double> before = m.flatten();
    ModelParams<double> grads = ModelParams<double>::sized(5, 3, 4, 2);
    sgd_step(m, grads, 1.5, 0.25);
    const Vec<double> after = m.flatten();
    for (Index i = 0; i < before.size(); ++i) CHECK(before[i] == after[i]);
}

TEST_CASE("sgd_step: a norm-10 gradient under clip 0.25 steps by lr * 0.25") {
    ModelParams<double> m = ModelParams<double>::sized(4, 3, 2, 1);
    ModelParams<double> grads = ModelParams<double>::sized(4, 3, 2, 1);
    grads.embedding(0, 0) = 10.0;  // global norm is exactly 10
    const double lr = 2.0;
    sgd_step(m, grads, lr, 0.25);
    CHECK(m.embedding(0, 0) == doctest::Approx(-lr * 0.25).epsilon(1e-15));
    CHECK(m.embedding(0, 1) == 0.0);
}

TEST_CASE("sgd_step: rescaling clipped gradients leaves the update unchanged") {
    ModelParams<double> base = random_model(5, 3, 4, 2, 85);
    ModelParams<double> grads = ModelParams<double>::sized(5, 3, 4, 2);
    Rng rng(86);
    grads.visit([&](auto& block) { rng.fill_uniform(block, -1.0, 1.0); });
    REQUIRE(std::sqrt(grads.squared_norm()) > 0.25);

    ModelParams<double> scaled = grads;
    scaled.visit([](auto& block) { block *= 7.0; });

    ModelParams<double> m1 = base, m2 = base;
    sgd_step(m1, grads, 1.0, 0.25);
    sgd_step(m2, scaled, 1.0, 0.25);
    const Vec<double> f1 = m1.flatten(), f2 = m2.flatten();
    for (Index i = 0; i < f1.size(); ++i) CHECK(std::abs(f1[i] - f2[i]) < 1e-12);
}

TEST_CASE("sgd_step: non-finite gradients raise a divergence error") {
    ModelParams<double> m = ModelParams<double>::sized(4, 3, 2, 1);
    ModelParams<double> grads = ModelParams<double>::sized(4, 3, 2, 1);
    grads.w_out(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_WITH_AS(sgd_step(m, grads, 1.0, 0.25),
                         "divergence: non-finite gradients", std::runtime_error);
}

TEST_CASE("sgd_step: repeated quadratic steps converge to the minimum") {
    // Descend 0.5 * (w - 3)^2 on a single entry with everything else frozen.
    ModelParams<double> m = ModelParams<double>::sized(4, 3, 2, 1);
    ModelParams<double> grads = ModelParams<double>::sized(4, 3, 2, 1);
    const double target = 3.0;
    for (int iter = 0; iter < 200; ++iter) {
        grads.b_out[0] = m.b_out[0] - target;
        sgd_step(m, grads, 0.5, 1e9);
    }
    CHECK(std::abs(m.b_out[0] - target) < 1e-8);
}

TEST_CASE("model params: flatten and assign_from_flat round-trip") {
    ModelParams<double> m = random_model(5, 3, 4, 2, 87);
    const Vec<double> flat = m.flatten();
    CHECK(flat.size() == m.param_count());

    ModelParams<double> copy = ModelParams<double>::sized(5, 3, 4, 2);
    copy.assign_from_flat(flat);
    const Vec<double> back = copy.flatten();
    for (Index i = 0; i < flat.size(); ++i) CHECK(back[i] == flat[i]);

    Vec<double> wrong = Vec<double>::Zero(flat.size() + 1);
    CHECK_THROWS_AS(copy.assign_from_flat(wrong), std::invalid_argument);
}

TEST_CASE("model params: init_uniform bounds weights and zeroes biases") {
    ModelParams<double> m = ModelParams<double>::sized(10, 4, 6, 2);
    Rng rng(88);
    m.init_uniform(rng);
    CHECK(m.embedding.cwiseAbs().maxCoeff() <= 0.1);
    CHECK(m.embedding.cwiseAbs().maxCoeff() > 0.0);
    for (const auto& layer : m.layers) {
        CHECK(layer.bias.cwiseAbs().maxCoeff() == 0.0);
        CHECK(layer.w_in.cwiseAbs().maxCoeff() <= 0.1);
    }
    CHECK(m.b_out.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("hidden state: zeros builds matching shapes") {
    Hidden<double> s = Hidden<double>::zeros(3, 5, 2);
    CHECK(s.num_layers() == 3);
    CHECK(s.batch() == 2);
    for (const auto& h : s.h) {
        CHECK(h.rows() == 5);
        CHECK(h.cols() == 2);
        CHECK(h.cwiseAbs().maxCoeff() == 0.0);
    }
}
