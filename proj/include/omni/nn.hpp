#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "omni/matrix.hpp"
#include "omni/rng.hpp"

namespace omni::nn {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

enum class Activation { Linear, Relu, Sigmoid, Softmax };

struct DenseParams {
    Matrix W;               // out x in
    std::vector<double> b;  // out

    std::size_t in_dim() const { return W.cols; }
    std::size_t out_dim() const { return W.rows; }
};

inline void softmax_inplace_row(double* row, std::size_t n) {
    double mx = row[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, row[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        row[i] = std::exp(row[i] - mx);
        sum += row[i];
    }
    for (std::size_t i = 0; i < n; ++i) row[i] /= sum;
}

inline void apply_activation(Matrix& Z, Activation act) {
    switch (act) {
        case Activation::Linear:
            return;
        case Activation::Relu:
            for (double& z : Z.v) z = z > 0.0 ? z : 0.0;
            return;
        case Activation::Sigmoid:
            for (double& z : Z.v) z = sigmoid(z);
            return;
        case Activation::Softmax:
            for (std::size_t r = 0; r < Z.rows; ++r) softmax_inplace_row(Z[r], Z.cols);
            return;
    }
}

// activation(W x + b) for a single input vector.
inline std::vector<double> dense_forward(const DenseParams& p, std::span<const double> x,
                                         Activation act) {
    if (x.size() != p.in_dim()) throw std::invalid_argument("dense_forward: shape mismatch");
    Matrix X(1, x.size());
    std::copy(x.begin(), x.end(), X.v.begin());
    Matrix Y = affine(X, p.W, p.b);
    apply_activation(Y, act);
    return Y.v;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

// Gate blocks are packed row-wise in the order forget, input, output,
// candidate. Wx is (4H x I), Wh is (4H x H), b is 4H.
struct LstmParams {
    Matrix Wx;
    Matrix Wh;
    std::vector<double> b;

    std::size_t hidden_dim() const { return Wh.cols; }
    std::size_t input_dim() const { return Wx.cols; }
};

enum GateIndex { kGateForget = 0, kGateInput = 1, kGateOutput = 2, kGateCandidate = 3 };

struct LstmState {
    std::vector<double> h;
    std::vector<double> c;
};

// One cell step for a single sample:
//   f,i,o = sigmoid(W_g x + U_g h + b_g)
//   c' = f.c + i.tanh(W_c x + U_c h + b_c)
//   h' = o.tanh(c')
inline LstmState lstm_cell(const LstmParams& p, std::span<const double> x, const LstmState& prev) {
    const std::size_t H = p.hidden_dim();
    const std::size_t I = p.input_dim();
    if (x.size() != I || prev.h.size() != H || prev.c.size() != H)
        throw std::invalid_argument("lstm_cell: shape mismatch");

    std::vector<double> pre(4 * H);
    for (std::size_t r = 0; r < 4 * H; ++r) {
        double acc = p.b[r];
        const double* wx = p.Wx[r];
        for (std::size_t k = 0; k < I; ++k) acc += wx[k] * x[k];
        const double* wh = p.Wh[r];
        for (std::size_t k = 0; k < H; ++k) acc += wh[k] * prev.h[k];
        pre[r] = acc;
    }
    LstmState next{std::vector<double>(H), std::vector<double>(H)};
    for (std::size_t j = 0; j < H; ++j) {
        const double f = sigmoid(pre[kGateForget * H + j]);
        const double i = sigmoid(pre[kGateInput * H + j]);
        const double o = sigmoid(pre[kGateOutput * H + j]);
        const double g = std::tanh(pre[kGateCandidate * H + j]);
        next.c[j] = f * prev.c[j] + i * g;
        next.h[j] = o * std::tanh(next.c[j]);
    }
    return next;
}

// Batched unroll caches for training.
struct LstmLayerCache {
    // Per time step, all B x H: post-activation gates and states.
    std::vector<Matrix> f, i, o, g, c, h, tanh_c;
    const std::vector<Matrix>* inputs = nullptr; // B x I per step, not owned
};

inline std::vector<Matrix> lstm_forward(const LstmParams& p, const std::vector<Matrix>& xs,
                                        LstmLayerCache& cache) {
    const std::size_t T = xs.size();
    const std::size_t H = p.hidden_dim();
    const std::size_t B = xs.empty() ? 0 : xs[0].rows;
    cache = LstmLayerCache{};
    cache.inputs = &xs;
    cache.f.reserve(T); cache.i.reserve(T); cache.o.reserve(T); cache.g.reserve(T);
    cache.c.reserve(T); cache.h.reserve(T); cache.tanh_c.reserve(T);

    Matrix h_prev(B, H), c_prev(B, H);
    for (std::size_t t = 0; t < T; ++t) {
        if (xs[t].cols != p.input_dim() || xs[t].rows != B)
            throw std::invalid_argument("lstm_forward: shape mismatch");
        Matrix pre = affine(xs[t], p.Wx, p.b);
        {
            // pre += h_prev * Wh^T
            for (std::size_t r = 0; r < B; ++r) {
                const double* hp = h_prev[r];
                double* out = pre[r];
                for (std::size_t g4 = 0; g4 < 4 * H; ++g4) {
                    const double* wh = p.Wh[g4];
                    double acc = 0.0;
                    for (std::size_t k = 0; k < H; ++k) acc += hp[k] * wh[k];
                    out[g4] += acc;
                }
            }
        }
        Matrix f(B, H), i(B, H), o(B, H), g(B, H), c(B, H), h(B, H), tc(B, H);
        for (std::size_t r = 0; r < B; ++r) {
            const double* pr = pre[r];
            const double* cp = c_prev[r];
            for (std::size_t j = 0; j < H; ++j) {
                const double fv = sigmoid(pr[kGateForget * H + j]);
                const double iv = sigmoid(pr[kGateInput * H + j]);
                const double ov = sigmoid(pr[kGateOutput * H + j]);
                const double gv = std::tanh(pr[kGateCandidate * H + j]);
                const double cv = fv * cp[j] + iv * gv;
                const double tcv = std::tanh(cv);
                f[r][j] = fv; i[r][j] = iv; o[r][j] = ov; g[r][j] = gv;
                c[r][j] = cv; tc[r][j] = tcv; h[r][j] = ov * tcv;
            }
        }
        h_prev = h;
        c_prev = c;
        cache.f.push_back(std::move(f));
        cache.i.push_back(std::move(i));
        cache.o.push_back(std::move(o));
        cache.g.push_back(std::move(g));
        cache.c.push_back(std::move(c));
        cache.h.push_back(std::move(h));
        cache.tanh_c.push_back(std::move(tc));
    }
    return cache.h;
}

struct LstmGrads {
    Matrix dWx;
    Matrix dWh;
    std::vector<double> db;
};

// Backprop through the unroll. dh_out[t] is the gradient arriving at h_t
// from outside the layer (zero matrices where nothing is attached).
// Returns gradients w.r.t. the inputs; parameter gradients are accumulated
// into grads.
inline std::vector<Matrix> lstm_backward(const LstmParams& p, const LstmLayerCache& cache,
                                         const std::vector<Matrix>& dh_out, LstmGrads& grads) {
    const std::size_t T = cache.h.size();
    const std::size_t H = p.hidden_dim();
    const std::size_t B = T ? cache.h[0].rows : 0;
    const auto& xs = *cache.inputs;

    grads.dWx = Matrix(4 * H, p.input_dim());
    grads.dWh = Matrix(4 * H, H);
    grads.db.assign(4 * H, 0.0);

    std::vector<Matrix> dxs(T);
    Matrix dh_rec(B, H), dc_rec(B, H);
    const Matrix zeros(B, H);

    for (std::size_t ti = T; ti-- > 0;) {
        const Matrix& c_prev = ti == 0 ? zeros : cache.c[ti - 1];
        const Matrix& h_prev = ti == 0 ? zeros : cache.h[ti - 1];

        Matrix dpre(B, 4 * H);
        for (std::size_t r = 0; r < B; ++r) {
            const double* dh_ext = dh_out[ti][r];
            const double* dhr = dh_rec[r];
            const double* dcr = dc_rec[r];
            const double* fv = cache.f[ti][r];
            const double* iv = cache.i[ti][r];
            const double* ov = cache.o[ti][r];
            const double* gv = cache.g[ti][r];
            const double* tcv = cache.tanh_c[ti][r];
            const double* cpv = c_prev[r];
            double* dp = dpre[r];
            double* dc_next = dc_rec[r]; // rewritten in place for step ti-1
            for (std::size_t j = 0; j < H; ++j) {
                const double dh = dh_ext[j] + dhr[j];
                const double dc = dh * ov[j] * (1.0 - tcv[j] * tcv[j]) + dcr[j];
                const double df = dc * cpv[j];
                const double di = dc * gv[j];
                const double dg = dc * iv[j];
                const double do_ = dh * tcv[j];
                dp[kGateForget * H + j] = df * fv[j] * (1.0 - fv[j]);
                dp[kGateInput * H + j] = di * iv[j] * (1.0 - iv[j]);
                dp[kGateOutput * H + j] = do_ * ov[j] * (1.0 - ov[j]);
                dp[kGateCandidate * H + j] = dg * (1.0 - gv[j] * gv[j]);
                dc_next[j] = dc * fv[j];
            }
        }
        accumulate_affine_grads(dpre, xs[ti], grads.dWx, grads.db);
        {
            std::vector<double> dummy(4 * H, 0.0);
            accumulate_affine_grads(dpre, h_prev, grads.dWh, dummy);
        }
        dh_rec = matmul(dpre, p.Wh);
        dxs[ti] = matmul(dpre, p.Wx);
    }
    return dxs;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// -log softmax probability of the true class; y must be one-hot.
inline double softmax_cross_entropy(std::span<const double> logits, std::span<const double> onehot) {
    if (logits.size() != onehot.size() || logits.size() < 2)
        throw std::invalid_argument("softmax_cross_entropy: shape mismatch");
    std::size_t hot = logits.size();
    for (std::size_t i = 0; i < onehot.size(); ++i) {
        if (onehot[i] == 1.0) {
            if (hot != logits.size()) throw std::invalid_argument("softmax_cross_entropy: y not one-hot");
            hot = i;
        } else if (onehot[i] != 0.0) {
            throw std::invalid_argument("softmax_cross_entropy: y not one-hot");
        }
    }
    if (hot == logits.size()) throw std::invalid_argument("softmax_cross_entropy: y not one-hot");

    double mx = logits[0];
    for (double z : logits) mx = std::max(mx, z);
    double sum = 0.0;
    for (double z : logits) sum += std::exp(z - mx);
    return -(logits[hot] - mx - std::log(sum));
}

constexpr double kBceEps = 1e-12;

// -[y ln p + (1-y) ln(1-p)] with p clipped into [eps, 1-eps].
inline double binary_cross_entropy(double p, int y) {
    p = std::clamp(p, kBceEps, 1.0 - kBceEps);
    return y == 1 ? -std::log(p) : -std::log1p(-p);
}

// Mean batch loss and dLoss/dlogits for integer class labels.
inline double softmax_cross_entropy_batch(const Matrix& logits, std::span<const int> labels,
                                          Matrix& dlogits) {
    const std::size_t B = logits.rows, C = logits.cols;
    if (labels.size() != B) throw std::invalid_argument("loss: label count mismatch");
    dlogits = logits;
    double loss = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        softmax_inplace_row(dlogits[r], C);
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= C)
            throw std::invalid_argument("loss: label out of range");
        loss -= std::log(std::max(dlogits[r][y], 1e-300));
        dlogits[r][y] -= 1.0;
        for (std::size_t c = 0; c < C; ++c) dlogits[r][c] /= static_cast<double>(B);
    }
    return loss / static_cast<double>(B);
}

// Mean batch loss and gradient w.r.t. the logit for sigmoid + BCE.
inline double sigmoid_bce_batch(const Matrix& logits, std::span<const int> labels, Matrix& dlogits) {
    const std::size_t B = logits.rows;
    if (logits.cols != 1 || labels.size() != B)
        throw std::invalid_argument("loss: shape mismatch");
    dlogits = Matrix(B, 1);
    double loss = 0.0;
    for (std::size_t r = 0; r < B; ++r) {
        const double p = sigmoid(logits[r][0]);
        loss += binary_cross_entropy(p, labels[r]);
        dlogits[r][0] = (p - static_cast<double>(labels[r])) / static_cast<double>(B);
    }
    return loss / static_cast<double>(B);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step_count = 0;
    AdamConfig cfg;

    explicit AdamState(std::size_t n = 0, AdamConfig c = {}) : m(n, 0.0), v(n, 0.0), cfg(c) {}
};

struct ParamRef {
    double* w;
    const double* g;
    std::size_t n;
};

// Standard Adam update with bias correction over a fixed parameter order.
inline void adam_step(std::span<const ParamRef> params, AdamState& st) {
    std::size_t total = 0;
    for (const auto& p : params) total += p.n;
    if (st.m.size() != total) throw std::invalid_argument("adam_step: state size mismatch");

    ++st.step_count;
    const double bc1 = 1.0 - std::pow(st.cfg.beta1, static_cast<double>(st.step_count));
    const double bc2 = 1.0 - std::pow(st.cfg.beta2, static_cast<double>(st.step_count));
    std::size_t at = 0;
    for (const auto& p : params) {
        for (std::size_t k = 0; k < p.n; ++k, ++at) {
            const double g = p.g[k];
            st.m[at] = st.cfg.beta1 * st.m[at] + (1.0 - st.cfg.beta1) * g;
            st.v[at] = st.cfg.beta2 * st.v[at] + (1.0 - st.cfg.beta2) * g * g;
            const double mhat = st.m[at] / bc1;
            const double vhat = st.v[at] / bc2;
            p.w[k] -= st.cfg.lr * mhat / (std::sqrt(vhat) + st.cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline void xavier_uniform(Matrix& W, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : W.v) w = rng.uniform(-bound, bound);
}

inline DenseParams make_dense(std::size_t in, std::size_t out, Rng& rng) {
    DenseParams p;
    p.W = Matrix(out, in);
    xavier_uniform(p.W, in, out, rng);
    p.b.assign(out, 0.0);
    return p;
}

// Per-gate Xavier for both weight matrices; forget-gate bias starts at 1.
inline LstmParams make_lstm(std::size_t input, std::size_t hidden, Rng& rng) {
    LstmParams p;
    p.Wx = Matrix(4 * hidden, input);
    xavier_uniform(p.Wx, input, hidden, rng);
    p.Wh = Matrix(4 * hidden, hidden);
    xavier_uniform(p.Wh, hidden, hidden, rng);
    p.b.assign(4 * hidden, 0.0);
    for (std::size_t j = 0; j < hidden; ++j) p.b[kGateForget * hidden + j] = 1.0;
    return p;
}

} // namespace omni::nn
