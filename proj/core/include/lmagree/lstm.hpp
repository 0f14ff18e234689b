// Word-level LSTM language model core: parameter container, cell equations,
// batched forward pass with inverted dropout, full backpropagation through a
// BPTT block, and the clipped SGD update.
//
// Gate slices within every 4h-row block are ordered [input, forget,
// candidate, output]; the flat parameter order (also the checkpoint order) is
// embedding, then per layer w_in / w_rec / bias, then w_out / b_out, each
// row-major.

#pragma once

#include "lmagree/corpus.hpp"
#include "lmagree/numerics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace lmagree {

template <class S>
struct LstmLayer {
    Mat<S> w_in;   // 4h x in
    Mat<S> w_rec;  // 4h x h
    Vec<S> bias;   // 4h
};

template <class S>
struct ModelParams {
    Mat<S> embedding;  // V x E
    std::vector<LstmLayer<S>> layers;
    Mat<S> w_out;  // V x h
    Vec<S> b_out;  // V

    Index vocab() const { return embedding.rows(); }
    Index embed_dim() const { return embedding.cols(); }
    Index hidden() const { return layers.empty() ? 0 : layers.front().w_rec.cols(); }
    Index num_layers() const { return static_cast<Index>(layers.size()); }

    static ModelParams sized(Index vocab, Index embed_dim, Index hidden, Index num_layers) {
        if (vocab < 1 || embed_dim < 1 || hidden < 1 || num_layers < 1) {
            throw std::invalid_argument("model dimensions must be positive");
        }
        ModelParams p;
        p.embedding = Mat<S>::Zero(vocab, embed_dim);
        for (Index l = 0; l < num_layers; ++l) {
            const Index in = (l == 0) ? embed_dim : hidden;
            p.layers.push_back({Mat<S>::Zero(4 * hidden, in),
                                Mat<S>::Zero(4 * hidden, hidden), Vec<S>::Zero(4 * hidden)});
        }
        p.w_out = Mat<S>::Zero(vocab, hidden);
        p.b_out = Vec<S>::Zero(vocab);
        return p;
    }

    // Weights uniform in [-range, range], biases zero.
    void init_uniform(Rng& rng, double range = 0.1) {
        rng.fill_uniform(embedding, -range, range);
        for (auto& layer : layers) {
            rng.fill_uniform(layer.w_in, -range, range);
            rng.fill_uniform(layer.w_rec, -range, range);
            layer.bias.setZero();
        }
        rng.fill_uniform(w_out, -range, range);
        b_out.setZero();
    }

    template <class F>
    void visit(F&& f) {
        f(embedding);
        for (auto& layer : layers) {
            f(layer.w_in);
            f(layer.w_rec);
            f(layer.bias);
        }
        f(w_out);
        f(b_out);
    }

    template <class F>
    void visit(F&& f) const {
        f(embedding);
        for (const auto& layer : layers) {
            f(layer.w_in);
            f(layer.w_rec);
            f(layer.bias);
        }
        f(w_out);
        f(b_out);
    }

    Index param_count() const {
        Index n = 0;
        visit([&](const auto& block) { n += block.size(); });
        return n;
    }

    void set_zero() {
        visit([](auto& block) { block.setZero(); });
    }

    double squared_norm() const {
        double n = 0;
        visit([&](const auto& block) { n += static_cast<double>(block.template cast<double>().squaredNorm()); });
        return n;
    }

    bool finite() const {
        bool ok = true;
        visit([&](const auto& block) { ok = ok && block.allFinite(); });
        return ok;
    }

    // this += alpha * other, blockwise.
    void axpy(S alpha, const ModelParams& other) {
        embedding += alpha * other.embedding;
        for (std::size_t l = 0; l < layers.size(); ++l) {
            layers[l].w_in += alpha * other.layers[l].w_in;
            layers[l].w_rec += alpha * other.layers[l].w_rec;
            layers[l].bias += alpha * other.layers[l].bias;
        }
        w_out += alpha * other.w_out;
        b_out += alpha * other.b_out;
    }

    // Flat view in the documented block order, always as double (the
    // gradient checker works in high precision).
    Vec<double> flatten() const {
        Vec<double> flat(param_count());
        Index pos = 0;
        visit([&](const auto& block) {
            for (Index i = 0; i < block.rows(); ++i)
                for (Index j = 0; j < block.cols(); ++j)
                    flat[pos++] = static_cast<double>(block(i, j));
        });
        return flat;
    }

    void assign_from_flat(const Vec<double>& flat) {
        if (flat.size() != param_count()) {
            throw std::invalid_argument("flat parameter size mismatch");
        }
        Index pos = 0;
        visit([&](auto& block) {
            for (Index i = 0; i < block.rows(); ++i)
                for (Index j = 0; j < block.cols(); ++j)
                    block(i, j) = static_cast<S>(flat[pos++]);
        });
    }
};

// Per-layer hidden and cell activations, one column per batch stream.
template <class S>
struct Hidden {
    std::vector<Mat<S>> h;
    std::vector<Mat<S>> c;

    static Hidden zeros(Index num_layers, Index hidden, Index batch) {
        Hidden s;
        for (Index l = 0; l < num_layers; ++l) {
            s.h.push_back(Mat<S>::Zero(hidden, batch));
            s.c.push_back(Mat<S>::Zero(hidden, batch));
        }
        return s;
    }

    Index num_layers() const { return static_cast<Index>(h.size()); }
    Index batch() const { return h.empty() ? 0 : h.front().cols(); }
};

template <class S>
Mat<S> sigmoid(const Mat<S>& x) {
    return ((-x.array()).exp() + S(1)).inverse().matrix();
}

// One LSTM step over a column batch. x: in x B, h/c: hidden x B.
template <class S>
void lstm_cell(const LstmLayer<S>& layer, const Mat<S>& x, const Mat<S>& h,
               const Mat<S>& c, Mat<S>& h_out, Mat<S>& c_out) {
    const Index hd = layer.w_rec.cols();
    if (layer.w_in.cols() != x.rows() || h.rows() != hd || c.rows() != hd ||
        h.cols() != x.cols() || c.cols() != x.cols() || layer.w_in.rows() != 4 * hd) {
        throw std::invalid_argument("lstm_cell: dimension mismatch");
    }
    Mat<S> z = layer.w_in * x + layer.w_rec * h;
    z.colwise() += layer.bias;
    const Mat<S> i = sigmoid<S>(z.middleRows(0, hd));
    const Mat<S> f = sigmoid<S>(z.middleRows(hd, hd));
    const Mat<S> g = z.middleRows(2 * hd, hd).array().tanh().matrix();
    const Mat<S> o = sigmoid<S>(z.middleRows(3 * hd, hd));
    c_out = f.cwiseProduct(c) + i.cwiseProduct(g);
    h_out = o.cwiseProduct(c_out.array().tanh().matrix());
}

// Dropout context for the training-mode forward pass. p == 0 (or a null rng)
// means evaluation behaviour.
struct DropoutCtx {
    double p = 0.0;
    Rng* rng = nullptr;

    bool active() const { return p > 0.0 && rng != nullptr; }
};

namespace detail_lstm {

// Everything the backward pass needs from one forward sweep.
template <class S>
struct Tape {
    std::vector<std::vector<Mat<S>>> xin;    // [layer][t] input fed to the cell
    std::vector<std::vector<Mat<S>>> gates;  // [layer][t] activated [i;f;g;o]
    std::vector<std::vector<Mat<S>>> c;      // [layer][t+1], [layer][0] = carried in
    std::vector<std::vector<Mat<S>>> h;      // [layer][t+1]
    std::vector<std::vector<Mat<S>>> tanh_c; // [layer][t]
    std::vector<Mat<S>> emb_mask;            // [t], empty when dropout inactive
    std::vector<std::vector<Mat<S>>> mid_mask;  // [layer-1][t]
};

template <class S>
Mat<S> dropout_mask(Index rows, Index cols, double p, Rng& rng) {
    const S keep_scale = static_cast<S>(1.0 / (1.0 - p));
    Mat<S> m(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            m(i, j) = rng.bernoulli(p) ? S(0) : keep_scale;
    return m;
}

// Forward sweep over a block. Fills `logits` (one V x B matrix per step) and,
// when `tape` is non-null, records activations for the backward pass.
template <class S>
void forward_sweep(const ModelParams<S>& params, const IdBlock& input, Hidden<S>& state,
                   const DropoutCtx& dropout, std::vector<Mat<S>>* logits,
                   Tape<S>* tape) {
    const Index num_layers = params.num_layers();
    const Index hd = params.hidden();
    const Index batch = input.rows;
    const Index steps = input.cols;
    const Index vocab = params.vocab();

    if (state.num_layers() != num_layers || state.batch() != batch ||
        (num_layers > 0 && state.h.front().rows() != hd)) {
        throw std::invalid_argument("forward: hidden state shape mismatch");
    }
    for (const std::int32_t id : input.ids) {
        if (id < 0 || id >= vocab) {
            throw std::out_of_range("forward: token id " + std::to_string(id) +
                                    " outside vocabulary of size " + std::to_string(vocab));
        }
    }

    const bool drop = dropout.active();
    if (tape) {
        tape->xin.assign(num_layers, {});
        tape->gates.assign(num_layers, {});
        tape->c.assign(num_layers, {});
        tape->h.assign(num_layers, {});
        tape->tanh_c.assign(num_layers, {});
        tape->mid_mask.assign(num_layers > 0 ? num_layers - 1 : 0, {});
        for (Index l = 0; l < num_layers; ++l) {
            tape->c[l].push_back(state.c[l]);
            tape->h[l].push_back(state.h[l]);
        }
    }
    if (logits) logits->clear();

    for (Index t = 0; t < steps; ++t) {
        // embedding lookup, one column per stream
        Mat<S> x(params.embed_dim(), batch);
        for (Index b = 0; b < batch; ++b) {
            x.col(b) = params.embedding.row(input.at(static_cast<std::int32_t>(b),
                                                     static_cast<std::int32_t>(t)))
                           .transpose();
        }
        if (drop) {
            Mat<S> mask = dropout_mask<S>(x.rows(), x.cols(), dropout.p, *dropout.rng);
            x = x.cwiseProduct(mask);
            if (tape) tape->emb_mask.push_back(std::move(mask));
        }

        for (Index l = 0; l < num_layers; ++l) {
            const LstmLayer<S>& layer = params.layers[static_cast<std::size_t>(l)];
            Mat<S> z = layer.w_in * x + layer.w_rec * state.h[l];
            z.colwise() += layer.bias;
            Mat<S> act(4 * hd, batch);
            act.middleRows(0, hd) = sigmoid<S>(z.middleRows(0, hd));
            act.middleRows(hd, hd) = sigmoid<S>(z.middleRows(hd, hd));
            act.middleRows(2 * hd, hd) = z.middleRows(2 * hd, hd).array().tanh().matrix();
            act.middleRows(3 * hd, hd) = sigmoid<S>(z.middleRows(3 * hd, hd));

            Mat<S> c_new = act.middleRows(hd, hd).cwiseProduct(state.c[l]) +
                           act.middleRows(0, hd).cwiseProduct(act.middleRows(2 * hd, hd));
            Mat<S> tc = c_new.array().tanh().matrix();
            Mat<S> h_new = act.middleRows(3 * hd, hd).cwiseProduct(tc);

            if (tape) {
                tape->xin[l].push_back(x);
                tape->gates[l].push_back(std::move(act));
                tape->c[l].push_back(c_new);
                tape->tanh_c[l].push_back(tc);
                tape->h[l].push_back(h_new);
            }
            state.c[l] = std::move(c_new);
            state.h[l] = h_new;

            x = std::move(h_new);
            if (l + 1 < num_layers && drop) {
                Mat<S> mask = dropout_mask<S>(x.rows(), x.cols(), dropout.p, *dropout.rng);
                x = x.cwiseProduct(mask);
                if (tape) tape->mid_mask[l].push_back(std::move(mask));
            }
        }

        if (logits) {
            Mat<S> y = params.w_out * x;
            y.colwise() += params.b_out;
            logits->push_back(std::move(y));
        }
    }
}

}  // namespace detail_lstm

// Logits for every position of the block; the carried state is updated in
// place. Gradients never flow through the carried-in state (truncated BPTT).
template <class S>
std::vector<Mat<S>> forward(const ModelParams<S>& params, const IdBlock& input,
                            Hidden<S>& state, const DropoutCtx& dropout = {}) {
    std::vector<Mat<S>> logits;
    detail_lstm::forward_sweep<S>(params, input, state, dropout, &logits, nullptr);
    return logits;
}

// Sum of per-position cross-entropies of a block, evaluation mode. Extended-
// precision accumulation keeps loss differences meaningful for the
// finite-difference gradient checker.
template <class S>
long double block_ce_sum(const ModelParams<S>& params, const BatchBlock& block,
                         Hidden<S>& state) {
    std::vector<Mat<S>> logits;
    detail_lstm::forward_sweep<S>(params, block.input, state, DropoutCtx{}, &logits, nullptr);
    long double total = 0;
    for (Index t = 0; t < static_cast<Index>(logits.size()); ++t) {
        for (Index b = 0; b < block.input.rows; ++b) {
            const Vec<S> col = logits[static_cast<std::size_t>(t)].col(b);
            total += static_cast<long double>(
                cross_entropy<S>(col, block.target.at(static_cast<std::int32_t>(b),
                                                      static_cast<std::int32_t>(t))));
        }
    }
    return total;
}

// Mean cross-entropy over all positions of the block (evaluation mode).
template <class S>
S block_loss(const ModelParams<S>& params, const BatchBlock& block, Hidden<S>& state) {
    if (block.input.rows < 1 || block.input.cols < 1) {
        throw std::invalid_argument("block_loss: empty block");
    }
    const double positions =
        static_cast<double>(block.input.rows) * static_cast<double>(block.input.cols);
    return static_cast<S>(block_ce_sum(params, block, state) / positions);
}

template <class S>
struct BlockResult {
    S loss = S(0);
    ModelParams<S> grads;
};

// Mean cross-entropy of the block plus gradients for every parameter via
// backpropagation through the block. The carried-in state is treated as a
// constant, and the state left behind is detached.
template <class S>
BlockResult<S> loss_and_grads(const ModelParams<S>& params, const BatchBlock& block,
                              Hidden<S>& state, double dropout_p, Rng& rng) {
    const Index num_layers = params.num_layers();
    const Index hd = params.hidden();
    const Index batch = block.input.rows;
    const Index steps = block.input.cols;
    if (block.target.rows != batch || block.target.cols != steps) {
        throw std::invalid_argument("loss_and_grads: target block shape mismatch");
    }
    if (batch < 1 || steps < 1) {
        throw std::invalid_argument("loss_and_grads: empty block");
    }
    const double positions = static_cast<double>(batch) * static_cast<double>(steps);

    DropoutCtx dropout;
    if (dropout_p > 0.0) dropout = DropoutCtx{dropout_p, &rng};

    detail_lstm::Tape<S> tape;
    std::vector<Mat<S>> logits;
    detail_lstm::forward_sweep(params, block.input, state, dropout, &logits, &tape);

    BlockResult<S> out;
    out.grads = ModelParams<S>::sized(params.vocab(), params.embed_dim(), hd, num_layers);

    // softmax over each column; dlogits = (softmax - onehot) / positions
    double ce_sum = 0;
    std::vector<Mat<S>> dlogits(static_cast<std::size_t>(steps));
    for (Index t = 0; t < steps; ++t) {
        Mat<S>& y = logits[static_cast<std::size_t>(t)];
        Mat<S> d(y.rows(), y.cols());
        for (Index b = 0; b < batch; ++b) {
            const Vec<S> col = y.col(b);
            const S lse = log_sum_exp<S>(col);
            const std::int32_t target =
                block.target.at(static_cast<std::int32_t>(b), static_cast<std::int32_t>(t));
            ce_sum += static_cast<double>(lse - col[target]);
            d.col(b) = ((col.array() - lse).exp()).matrix();
            d(target, b) -= S(1);
        }
        dlogits[static_cast<std::size_t>(t)] = d / static_cast<S>(positions);
    }
    out.loss = static_cast<S>(ce_sum / positions);

    const bool drop = dropout.active();
    std::vector<Mat<S>> dh_next(static_cast<std::size_t>(num_layers),
                                Mat<S>::Zero(hd, batch));
    std::vector<Mat<S>> dc_next(static_cast<std::size_t>(num_layers),
                                Mat<S>::Zero(hd, batch));

    for (Index t = steps - 1; t >= 0; --t) {
        const std::size_t ts = static_cast<std::size_t>(t);
        // output projection; the top-layer output that reached it got no dropout
        const Mat<S>& h_top = tape.h[static_cast<std::size_t>(num_layers - 1)][ts + 1];
        out.grads.w_out += dlogits[ts] * h_top.transpose();
        out.grads.b_out += dlogits[ts].rowwise().sum();

        Mat<S> dx_above;  // gradient w.r.t. the input of the layer above
        for (Index l = num_layers - 1; l >= 0; --l) {
            const std::size_t ls = static_cast<std::size_t>(l);
            Mat<S> dh;
            if (l == num_layers - 1) {
                dh = params.w_out.transpose() * dlogits[ts];
            } else {
                dh = dx_above;
                if (drop) dh = dh.cwiseProduct(tape.mid_mask[ls][ts]);
            }
            dh += dh_next[ls];

            const Mat<S>& act = tape.gates[ls][ts];
            const auto i = act.middleRows(0, hd);
            const auto f = act.middleRows(hd, hd);
            const auto g = act.middleRows(2 * hd, hd);
            const auto o = act.middleRows(3 * hd, hd);
            const Mat<S>& tc = tape.tanh_c[ls][ts];
            const Mat<S>& c_prev = tape.c[ls][ts];

            const Mat<S> d_o = dh.cwiseProduct(tc);
            Mat<S> dc = dh.cwiseProduct(o).cwiseProduct(
                (S(1) - tc.array().square()).matrix());
            dc += dc_next[ls];

            Mat<S> dz(4 * hd, batch);
            dz.middleRows(0, hd) = dc.cwiseProduct(g).cwiseProduct(i.cwiseProduct(
                (S(1) - i.array()).matrix()));
            dz.middleRows(hd, hd) = dc.cwiseProduct(c_prev).cwiseProduct(f.cwiseProduct(
                (S(1) - f.array()).matrix()));
            dz.middleRows(2 * hd, hd) =
                dc.cwiseProduct(i).cwiseProduct((S(1) - g.array().square()).matrix());
            dz.middleRows(3 * hd, hd) = d_o.cwiseProduct(o.cwiseProduct(
                (S(1) - o.array()).matrix()));

            LstmLayer<S>& grad_layer = out.grads.layers[ls];
            const LstmLayer<S>& layer = params.layers[ls];
            grad_layer.w_in += dz * tape.xin[ls][ts].transpose();
            grad_layer.w_rec += dz * tape.h[ls][ts].transpose();
            grad_layer.bias += dz.rowwise().sum();

            dh_next[ls] = layer.w_rec.transpose() * dz;
            dc_next[ls] = dc.cwiseProduct(f);
            dx_above = layer.w_in.transpose() * dz;
        }

        // dx_above now holds the gradient w.r.t. the (dropped-out) embedding output
        Mat<S> dx_emb = std::move(dx_above);
        if (drop) dx_emb = dx_emb.cwiseProduct(tape.emb_mask[ts]);
        for (Index b = 0; b < batch; ++b) {
            out.grads.embedding.row(block.input.at(static_cast<std::int32_t>(b),
                                                   static_cast<std::int32_t>(t))) +=
                dx_emb.col(b).transpose();
        }
    }
    return out;
}

// Clipped SGD update: if the global gradient norm exceeds clip_norm all
// gradients are rescaled to that norm, then params -= lr * grads.
template <class S>
void sgd_step(ModelParams<S>& params, const ModelParams<S>& grads, S lr, S clip_norm) {
    const double norm = std::sqrt(grads.squared_norm());
    if (!std::isfinite(norm)) {
        throw std::runtime_error("divergence: non-finite gradients");
    }
    S scale = S(1);
    if (clip_norm > S(0) && norm > static_cast<double>(clip_norm)) {
        scale = static_cast<S>(static_cast<double>(clip_norm) / norm);
    }
    params.axpy(-lr * scale, grads);
}

}  // namespace lmagree
