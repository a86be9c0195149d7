#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "omni/dataset.hpp"
#include "omni/features.hpp"
#include "omni/nn.hpp"
#include "omni/rng.hpp"

namespace omni::models {

enum class Mode : int { Binary = 0, Multi = 1 };
enum class ModelKind : int { Fnn = 0, Lstm = 1, Ensemble = 2 };

inline int num_classes(Mode m) { return m == Mode::Binary ? 2 : kNumClasses; }

// Binary mode maps Normal -> 0 and every attack -> 1.
inline int map_label(int cls, Mode m) { return m == Mode::Binary ? (cls != 0 ? 1 : 0) : cls; }

struct TrainConfig {
    std::size_t batch_size = 1000;
    int max_epochs = 60;            // FNN cap
    int lstm_max_epochs = 3;        // LSTM stops at 3 epochs
    double rel_loss_delta = 1e-6;   // early-stop qualifier threshold
    int stop_patience = 35;         // qualifying-epoch count that triggers the stop
    double learning_rate = 1e-3;
    double lstm_learning_rate = 2e-2;
    int voter_max_epochs = 40;
    std::uint64_t seed = 1;

    int fnn_hidden_layers = 1;
    std::size_t fnn_hidden_width = 64;
    std::size_t lstm_hidden = 10;
    std::uint32_t window = 10;
    std::size_t voter_hidden = 32;

    void validate() const {
        if (batch_size == 0 || max_epochs <= 0 || lstm_max_epochs <= 0 || stop_patience <= 0 ||
            !(learning_rate > 0.0) || window == 0)
            throw std::invalid_argument("train config: values must be positive");
    }
};

struct EpochLog {
    double train_loss = 0.0;
    double test_loss = 0.0;
};

struct TrainingLog {
    std::vector<EpochLog> epochs;
    std::size_t steps_per_epoch = 0;
    bool early_stopped = false;
};

// Counts epochs whose relative consecutive-loss difference is below the
// threshold; fires on the epoch where the count reaches the patience target.
class EarlyStop {
public:
    EarlyStop(double rel_delta, int patience) : rel_delta_(rel_delta), patience_(patience) {}

    bool update(double loss) {
        if (has_prev_) {
            const double denom = std::max(std::abs(prev_), 1e-300);
            if (std::abs(loss - prev_) / denom < rel_delta_) ++count_;
        }
        prev_ = loss;
        has_prev_ = true;
        return count_ >= patience_;
    }

    int qualifying_epochs() const { return count_; }

private:
    double rel_delta_;
    int patience_;
    double prev_ = 0.0;
    bool has_prev_ = false;
    int count_ = 0;
};

// ---------------------------------------------------------------------------
// Sample spaces
// ---------------------------------------------------------------------------

// Sliding-window sample space over a dataset. With t = 1 the windows
// degenerate to single records. Windows never span segment boundaries.
struct WindowSet {
    std::uint32_t t = 1;
    std::vector<std::uint32_t> starts; // first row of each window
    std::vector<int> labels;           // label of the window's last row

    std::size_t size() const { return starts.size(); }
    std::uint32_t last_row(std::size_t w) const { return starts[w] + t - 1; }
};

inline WindowSet build_windows(const Dataset& ds, std::uint32_t t) {
    WindowSet ws;
    ws.t = t;
    for (std::size_t s = 0; s < ds.segment_starts.size(); ++s) {
        const std::uint32_t begin = ds.segment_starts[s];
        const std::uint32_t end = s + 1 < ds.segment_starts.size()
                                      ? ds.segment_starts[s + 1]
                                      : static_cast<std::uint32_t>(ds.size());
        for (std::uint32_t w : features::make_windows(begin, end, t)) ws.starts.push_back(w);
    }
    ws.labels.reserve(ws.size());
    for (std::size_t w = 0; w < ws.size(); ++w) ws.labels.push_back(ds.labels[ws.last_row(w)]);
    return ws;
}

// ---------------------------------------------------------------------------
// FNN
// ---------------------------------------------------------------------------

struct FnnModel {
    Mode mode = Mode::Binary;
    std::vector<nn::DenseParams> layers; // hidden ReLU layers, then linear output
    features::ScalerStats scaler;

    int classes() const { return static_cast<int>(layers.back().out_dim()); }
};

inline Matrix fnn_logits(const FnnModel& m, const Matrix& X, std::vector<Matrix>* cache = nullptr) {
    Matrix h = X;
    if (cache) cache->clear();
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        if (cache) cache->push_back(h);
        h = affine(h, m.layers[l].W, m.layers[l].b);
        if (l + 1 < m.layers.size()) nn::apply_activation(h, nn::Activation::Relu);
    }
    return h;
}

struct Prediction {
    std::vector<double> scores; // softmax probabilities, or {1-p, p} in binary LSTM mode
    int label = 0;
};

// Argmax with ties broken toward the lower class id (Normal first).
inline int argmax_label(std::span<const double> scores) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(scores.size()); ++i)
        if (scores[i] > scores[best]) best = i;
    return best;
}

inline Prediction predict(const FnnModel& m, std::span<const double> raw_row) {
    const auto x = features::transform(raw_row, m.scaler);
    Matrix X(1, x.size());
    std::copy(x.begin(), x.end(), X.v.begin());
    Matrix logits = fnn_logits(m, X);
    nn::apply_activation(logits, nn::Activation::Softmax);
    Prediction p{logits.v, 0};
    p.label = argmax_label(p.scores);
    return p;
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

struct LstmModel {
    Mode mode = Mode::Binary;
    std::uint32_t window = 10;
    nn::LstmParams layer1;
    nn::LstmParams layer2;
    nn::DenseParams head; // hidden -> 1 sigmoid (binary) or -> C softmax (multi)
    features::ScalerStats scaler;

    int classes() const { return mode == Mode::Binary ? 2 : static_cast<int>(head.out_dim()); }
};

// Head logits for a batch of windows given per-step inputs.
inline Matrix lstm_logits(const LstmModel& m, const std::vector<Matrix>& xs) {
    nn::LstmLayerCache c1, c2;
    const std::vector<Matrix> h1 = nn::lstm_forward(m.layer1, xs, c1);
    const std::vector<Matrix> h2 = nn::lstm_forward(m.layer2, h1, c2);
    return affine(h2.back(), m.head.W, m.head.b);
}

// Scores for a single raw window (t rows of 19 raw features).
inline Prediction predict(const LstmModel& m, const Matrix& raw_window) {
    if (raw_window.rows != m.window || raw_window.cols != m.scaler.mean.size())
        throw std::invalid_argument("lstm predict: window shape mismatch");
    std::vector<Matrix> xs(m.window, Matrix(1, raw_window.cols));
    for (std::uint32_t t = 0; t < m.window; ++t) {
        const auto x = features::transform(
            std::span<const double>(raw_window[t], raw_window.cols), m.scaler);
        std::copy(x.begin(), x.end(), xs[t].v.begin());
    }
    Matrix logits = lstm_logits(m, xs);
    Prediction p;
    if (m.mode == Mode::Binary) {
        const double prob = nn::sigmoid(logits[0][0]);
        p.scores = {1.0 - prob, prob};
        p.label = prob > 0.5 ? 1 : 0; // a score of exactly 0.5 stays Normal
    } else {
        nn::apply_activation(logits, nn::Activation::Softmax);
        p.scores = logits.v;
        p.label = argmax_label(p.scores);
    }
    return p;
}

// ---------------------------------------------------------------------------
// Ensemble
// ---------------------------------------------------------------------------

struct EnsembleModel {
    FnnModel fnn;   // multiclass
    LstmModel lstm; // multiclass
    // Voter MLP over the concatenated class scores, FNN scores first.
    std::vector<nn::DenseParams> voter;
    std::uint32_t window = 10;

    int classes() const { return static_cast<int>(voter.back().out_dim()); }
};

inline Matrix voter_logits(const EnsembleModel& m, const Matrix& X, std::vector<Matrix>* cache = nullptr) {
    Matrix h = X;
    if (cache) cache->clear();
    for (std::size_t l = 0; l < m.voter.size(); ++l) {
        if (cache) cache->push_back(h);
        h = affine(h, m.voter[l].W, m.voter[l].b);
        if (l + 1 < m.voter.size()) nn::apply_activation(h, nn::Activation::Relu);
    }
    return h;
}

inline Prediction predict(const EnsembleModel& m, const Matrix& raw_window) {
    const Prediction pf = predict(m.fnn, std::span<const double>(raw_window[raw_window.rows - 1],
                                                                 raw_window.cols));
    const Prediction pl = predict(m.lstm, raw_window);
    Matrix X(1, pf.scores.size() + pl.scores.size());
    std::copy(pf.scores.begin(), pf.scores.end(), X.v.begin());
    std::copy(pl.scores.begin(), pl.scores.end(), X.v.begin() + pf.scores.size());
    Matrix logits = voter_logits(m, X);
    nn::apply_activation(logits, nn::Activation::Softmax);
    Prediction p{logits.v, 0};
    p.label = argmax_label(p.scores);
    return p;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::uint32_t> shuffled(std::size_t n, Rng& rng) {
    std::vector<std::uint32_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0u);
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = rng.next_below(i);
        std::swap(idx[i - 1], idx[j]);
    }
    return idx;
}

// Scaled copy of the full feature matrix using stats fitted on the rows
// listed in fit_rows (the training portion).
inline std::pair<Matrix, features::ScalerStats> scale_dataset(const Matrix& raw,
                                                              std::span<const std::uint32_t> fit_rows) {
    if (fit_rows.empty()) throw std::invalid_argument("train: empty training split");
    Matrix fit(fit_rows.size(), raw.cols);
    for (std::size_t i = 0; i < fit_rows.size(); ++i)
        std::copy(raw[fit_rows[i]], raw[fit_rows[i]] + raw.cols, fit[i]);
    features::ScalerStats stats = features::fit_scaler(fit);
    Matrix scaled = raw;
    features::transform_inplace(scaled, stats);
    return {std::move(scaled), std::move(stats)};
}

struct AdamBinding {
    std::vector<nn::ParamRef> refs;
    nn::AdamState state;
};

inline AdamBinding bind_adam(std::vector<std::pair<double*, std::size_t>> params,
                             std::vector<std::pair<const double*, std::size_t>> grads,
                             double lr) {
    AdamBinding b;
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        b.refs.push_back({params[i].first, grads[i].first, params[i].second});
        total += params[i].second;
    }
    nn::AdamConfig cfg;
    cfg.lr = lr;
    b.state = nn::AdamState(total, cfg);
    return b;
}

} // namespace detail

struct FnnTrainResult {
    FnnModel model;
    TrainingLog log;
};

// Minimizes softmax cross entropy with Adam over mini-batches. Stops when
// the count of epochs whose relative consecutive-loss difference is below
// the threshold reaches the patience target, or at max_epochs.
inline FnnTrainResult train_fnn(const Dataset& ds, const WindowSet& ws,
                                std::span<const std::uint32_t> train_idx,
                                std::span<const std::uint32_t> test_idx, Mode mode,
                                const TrainConfig& cfg) {
    cfg.validate();
    if (train_idx.empty()) throw std::invalid_argument("train_fnn: empty training data");

    std::vector<std::uint32_t> fit_rows;
    fit_rows.reserve(train_idx.size());
    for (std::uint32_t w : train_idx) fit_rows.push_back(ws.last_row(w));
    auto [scaled, stats] = detail::scale_dataset(ds.features, fit_rows);

    FnnModel m;
    m.mode = mode;
    m.scaler = std::move(stats);
    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(1);
    Rng shuffle_rng = rng.fork(2);

    const int C = num_classes(mode);
    std::size_t in = kNumFeatures;
    for (int l = 0; l < cfg.fnn_hidden_layers; ++l) {
        m.layers.push_back(nn::make_dense(in, cfg.fnn_hidden_width, init_rng));
        in = cfg.fnn_hidden_width;
    }
    m.layers.push_back(nn::make_dense(in, static_cast<std::size_t>(C), init_rng));

    std::vector<std::pair<double*, std::size_t>> prefs;
    std::vector<nn::DenseParams> grads;
    for (auto& l : m.layers) grads.push_back({Matrix(l.W.rows, l.W.cols), std::vector<double>(l.b.size(), 0.0)});
    std::vector<std::pair<const double*, std::size_t>> grefs;
    for (std::size_t l = 0; l < m.layers.size(); ++l) {
        prefs.push_back({m.layers[l].W.v.data(), m.layers[l].W.v.size()});
        prefs.push_back({m.layers[l].b.data(), m.layers[l].b.size()});
        grefs.push_back({grads[l].W.v.data(), grads[l].W.v.size()});
        grefs.push_back({grads[l].b.data(), grads[l].b.size()});
    }
    auto adam = detail::bind_adam(prefs, grefs, cfg.learning_rate);

    auto epoch_loss_on = [&](std::span<const std::uint32_t> idx) {
        if (idx.empty()) return 0.0;
        double total = 0.0;
        const std::size_t bs = 4096;
        for (std::size_t at = 0; at < idx.size(); at += bs) {
            const std::size_t n = std::min(bs, idx.size() - at);
            Matrix X(n, kNumFeatures);
            std::vector<int> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint32_t row = ws.last_row(idx[at + i]);
                std::copy(scaled[row], scaled[row] + kNumFeatures, X[i]);
                y[i] = map_label(ws.labels[idx[at + i]], mode);
            }
            Matrix logits = fnn_logits(m, X);
            Matrix dl;
            total += nn::softmax_cross_entropy_batch(logits, y, dl) * static_cast<double>(n);
        }
        return total / static_cast<double>(idx.size());
    };

    TrainingLog log;
    log.steps_per_epoch = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
    EarlyStop stop(cfg.rel_loss_delta, cfg.stop_patience);

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        auto order = detail::shuffled(train_idx.size(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - at);
            Matrix X(n, kNumFeatures);
            std::vector<int> y(n);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint32_t w = train_idx[order[at + i]];
                const std::uint32_t row = ws.last_row(w);
                std::copy(scaled[row], scaled[row] + kNumFeatures, X[i]);
                y[i] = map_label(ws.labels[w], mode);
            }
            std::vector<Matrix> acts;
            Matrix logits = fnn_logits(m, X, &acts);
            Matrix dl;
            epoch_loss += nn::softmax_cross_entropy_batch(logits, y, dl) * static_cast<double>(n);
            seen += n;

            for (auto& g : grads) {
                g.W.zero();
                std::fill(g.b.begin(), g.b.end(), 0.0);
            }
            Matrix delta = dl;
            for (std::size_t l = m.layers.size(); l-- > 0;) {
                accumulate_affine_grads(delta, acts[l], grads[l].W, grads[l].b);
                if (l > 0) {
                    delta = matmul(delta, m.layers[l].W);
                    for (std::size_t k = 0; k < delta.v.size(); ++k)
                        if (acts[l].v[k] <= 0.0) delta.v[k] = 0.0;
                }
            }
            nn::adam_step(adam.refs, adam.state);
        }
        EpochLog el;
        el.train_loss = epoch_loss / static_cast<double>(seen);
        el.test_loss = epoch_loss_on(test_idx);
        log.epochs.push_back(el);
        if (stop.update(el.train_loss)) {
            log.early_stopped = true;
            break;
        }
    }
    return {std::move(m), std::move(log)};
}

struct LstmTrainResult {
    LstmModel model;
    TrainingLog log;
};

// Two stacked LSTM layers unrolled over the window, trained with Adam on
// binary cross entropy (binary) or softmax cross entropy (multiclass).
// Stops at lstm_max_epochs, or earlier if the relative-delta criterion
// fires first.
inline LstmTrainResult train_lstm(const Dataset& ds, const WindowSet& ws,
                                  std::span<const std::uint32_t> train_idx,
                                  std::span<const std::uint32_t> test_idx, Mode mode,
                                  const TrainConfig& cfg) {
    cfg.validate();
    if (train_idx.empty()) throw std::invalid_argument("train_lstm: empty training data");
    if (ws.t != cfg.window) throw std::invalid_argument("train_lstm: window length mismatch");

    std::vector<std::uint32_t> fit_rows;
    fit_rows.reserve(train_idx.size());
    for (std::uint32_t w : train_idx) fit_rows.push_back(ws.last_row(w));
    auto [scaled, stats] = detail::scale_dataset(ds.features, fit_rows);

    LstmModel m;
    m.mode = mode;
    m.window = ws.t;
    m.scaler = std::move(stats);
    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(1);
    Rng shuffle_rng = rng.fork(2);
    const std::size_t H = cfg.lstm_hidden;
    m.layer1 = nn::make_lstm(kNumFeatures, H, init_rng);
    m.layer2 = nn::make_lstm(H, H, init_rng);
    const int C = mode == Mode::Binary ? 1 : num_classes(mode);
    m.head = nn::make_dense(H, static_cast<std::size_t>(C), init_rng);

    nn::LstmGrads g1, g2;
    nn::DenseParams gh{Matrix(m.head.W.rows, m.head.W.cols), std::vector<double>(m.head.b.size(), 0.0)};
    // Bind Adam after the first backward pass sizes g1/g2.
    g1.dWx = Matrix(m.layer1.Wx.rows, m.layer1.Wx.cols);
    g1.dWh = Matrix(m.layer1.Wh.rows, m.layer1.Wh.cols);
    g1.db.assign(m.layer1.b.size(), 0.0);
    g2.dWx = Matrix(m.layer2.Wx.rows, m.layer2.Wx.cols);
    g2.dWh = Matrix(m.layer2.Wh.rows, m.layer2.Wh.cols);
    g2.db.assign(m.layer2.b.size(), 0.0);

    auto adam = detail::bind_adam(
        {{m.layer1.Wx.v.data(), m.layer1.Wx.v.size()},
         {m.layer1.Wh.v.data(), m.layer1.Wh.v.size()},
         {m.layer1.b.data(), m.layer1.b.size()},
         {m.layer2.Wx.v.data(), m.layer2.Wx.v.size()},
         {m.layer2.Wh.v.data(), m.layer2.Wh.v.size()},
         {m.layer2.b.data(), m.layer2.b.size()},
         {m.head.W.v.data(), m.head.W.v.size()},
         {m.head.b.data(), m.head.b.size()}},
        {{g1.dWx.v.data(), g1.dWx.v.size()},
         {g1.dWh.v.data(), g1.dWh.v.size()},
         {g1.db.data(), g1.db.size()},
         {g2.dWx.v.data(), g2.dWx.v.size()},
         {g2.dWh.v.data(), g2.dWh.v.size()},
         {g2.db.data(), g2.db.size()},
         {gh.W.v.data(), gh.W.v.size()},
         {gh.b.data(), gh.b.size()}},
        cfg.lstm_learning_rate);

    const std::uint32_t T = ws.t;

    auto batch_loss = [&](std::span<const std::uint32_t> idx, std::span<const std::uint32_t> order,
                          std::size_t at, std::size_t n, bool train, double& loss_out) {
        std::vector<Matrix> xs(T);
        for (std::uint32_t t = 0; t < T; ++t) {
            Matrix X(n, kNumFeatures);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint32_t row = ws.starts[idx[order[at + i]]] + t;
                std::copy(scaled[row], scaled[row] + kNumFeatures, X[i]);
            }
            xs[t] = std::move(X);
        }
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) y[i] = map_label(ws.labels[idx[order[at + i]]], mode);

        nn::LstmLayerCache c1, c2;
        const std::vector<Matrix> h1 = nn::lstm_forward(m.layer1, xs, c1);
        const std::vector<Matrix> h2 = nn::lstm_forward(m.layer2, h1, c2);
        Matrix logits = affine(h2.back(), m.head.W, m.head.b);
        Matrix dl;
        loss_out = mode == Mode::Binary ? nn::sigmoid_bce_batch(logits, y, dl)
                                        : nn::softmax_cross_entropy_batch(logits, y, dl);
        if (!train) return;

        gh.W.zero();
        std::fill(gh.b.begin(), gh.b.end(), 0.0);
        accumulate_affine_grads(dl, h2.back(), gh.W, gh.b);
        Matrix dh_last = matmul(dl, m.head.W);

        std::vector<Matrix> dh2(T, Matrix(n, m.layer2.hidden_dim()));
        dh2[T - 1] = std::move(dh_last);
        nn::LstmGrads tmp2;
        std::vector<Matrix> dh1 = nn::lstm_backward(m.layer2, c2, dh2, tmp2);
        nn::LstmGrads tmp1;
        nn::lstm_backward(m.layer1, c1, dh1, tmp1);
        // Copy into the buffers Adam is bound to; the bindings must not move.
        std::copy(tmp1.dWx.v.begin(), tmp1.dWx.v.end(), g1.dWx.v.begin());
        std::copy(tmp1.dWh.v.begin(), tmp1.dWh.v.end(), g1.dWh.v.begin());
        std::copy(tmp1.db.begin(), tmp1.db.end(), g1.db.begin());
        std::copy(tmp2.dWx.v.begin(), tmp2.dWx.v.end(), g2.dWx.v.begin());
        std::copy(tmp2.dWh.v.begin(), tmp2.dWh.v.end(), g2.dWh.v.begin());
        std::copy(tmp2.db.begin(), tmp2.db.end(), g2.db.begin());
        nn::adam_step(adam.refs, adam.state);
    };

    TrainingLog log;
    log.steps_per_epoch = (train_idx.size() + cfg.batch_size - 1) / cfg.batch_size;
    EarlyStop stop(cfg.rel_loss_delta, cfg.stop_patience);
    std::vector<std::uint32_t> ident(test_idx.size());
    std::iota(ident.begin(), ident.end(), 0u);

    for (int epoch = 0; epoch < cfg.lstm_max_epochs; ++epoch) {
        auto order = detail::shuffled(train_idx.size(), shuffle_rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - at);
            double loss = 0.0;
            batch_loss(train_idx, order, at, n, true, loss);
            epoch_loss += loss * static_cast<double>(n);
            seen += n;
        }
        EpochLog el;
        el.train_loss = epoch_loss / static_cast<double>(seen);
        double test_total = 0.0;
        for (std::size_t at = 0; at < ident.size(); at += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, ident.size() - at);
            double loss = 0.0;
            batch_loss(test_idx, ident, at, n, false, loss);
            test_total += loss * static_cast<double>(n);
        }
        el.test_loss = ident.empty() ? 0.0 : test_total / static_cast<double>(ident.size());
        log.epochs.push_back(el);
        if (stop.update(el.train_loss)) {
            log.early_stopped = true;
            break;
        }
    }
    return {std::move(m), std::move(log)};
}

// Batched multiclass scores used by ensemble training and the evaluators.
inline void fnn_scores_batch(const FnnModel& m, const Matrix& scaled, const WindowSet& ws,
                             std::span<const std::uint32_t> idx, Matrix& out) {
    out = Matrix(idx.size(), static_cast<std::size_t>(m.classes()));
    const std::size_t bs = 4096;
    for (std::size_t at = 0; at < idx.size(); at += bs) {
        const std::size_t n = std::min(bs, idx.size() - at);
        Matrix X(n, kNumFeatures);
        for (std::size_t i = 0; i < n; ++i) {
            const std::uint32_t row = ws.last_row(idx[at + i]);
            std::copy(scaled[row], scaled[row] + kNumFeatures, X[i]);
        }
        Matrix logits = fnn_logits(m, X);
        nn::apply_activation(logits, nn::Activation::Softmax);
        for (std::size_t i = 0; i < n; ++i)
            std::copy(logits[i], logits[i] + logits.cols, out[at + i]);
    }
}

inline void lstm_scores_batch(const LstmModel& m, const Matrix& scaled, const WindowSet& ws,
                              std::span<const std::uint32_t> idx, Matrix& out) {
    const int C = m.classes();
    out = Matrix(idx.size(), static_cast<std::size_t>(C));
    const std::size_t bs = 2048;
    std::vector<std::uint32_t> order(idx.size());
    std::iota(order.begin(), order.end(), 0u);
    for (std::size_t at = 0; at < idx.size(); at += bs) {
        const std::size_t n = std::min(bs, idx.size() - at);
        std::vector<Matrix> xs(m.window);
        for (std::uint32_t t = 0; t < m.window; ++t) {
            Matrix X(n, kNumFeatures);
            for (std::size_t i = 0; i < n; ++i) {
                const std::uint32_t row = ws.starts[idx[at + i]] + t;
                std::copy(scaled[row], scaled[row] + kNumFeatures, X[i]);
            }
            xs[t] = std::move(X);
        }
        Matrix logits = lstm_logits(m, xs);
        if (m.mode == Mode::Binary) {
            for (std::size_t i = 0; i < n; ++i) {
                const double p = nn::sigmoid(logits[i][0]);
                out[at + i][0] = 1.0 - p;
                out[at + i][1] = p;
            }
        } else {
            nn::apply_activation(logits, nn::Activation::Softmax);
            for (std::size_t i = 0; i < n; ++i)
                std::copy(logits[i], logits[i] + logits.cols, out[at + i]);
        }
    }
}

struct EnsembleTrainResult {
    EnsembleModel model;
    TrainingLog fnn_log;
    TrainingLog lstm_log;
    TrainingLog voter_log;
};

// FNN and LSTM are trained independently in multiclass mode; the voter MLP
// is then trained on their frozen concatenated class scores.
inline EnsembleTrainResult train_ensemble(const Dataset& ds, const WindowSet& ws,
                                          std::span<const std::uint32_t> train_idx,
                                          std::span<const std::uint32_t> test_idx,
                                          const TrainConfig& cfg) {
    EnsembleTrainResult r;
    auto fnn = train_fnn(ds, ws, train_idx, test_idx, Mode::Multi, cfg);
    auto lstm = train_lstm(ds, ws, train_idx, test_idx, Mode::Multi, cfg);
    r.model.fnn = std::move(fnn.model);
    r.model.lstm = std::move(lstm.model);
    r.model.window = ws.t;
    r.fnn_log = std::move(fnn.log);
    r.lstm_log = std::move(lstm.log);

    // Frozen base-model scores on the training split.
    Matrix scaled_f = ds.features;
    features::transform_inplace(scaled_f, r.model.fnn.scaler);
    Matrix scaled_l = ds.features;
    features::transform_inplace(scaled_l, r.model.lstm.scaler);

    Matrix sf, sl;
    fnn_scores_batch(r.model.fnn, scaled_f, ws, train_idx, sf);
    lstm_scores_batch(r.model.lstm, scaled_l, ws, train_idx, sl);
    const int C = kNumClasses;
    Matrix X(train_idx.size(), static_cast<std::size_t>(2 * C));
    for (std::size_t i = 0; i < train_idx.size(); ++i) {
        std::copy(sf[i], sf[i] + C, X[i]);
        std::copy(sl[i], sl[i] + C, X[i] + C);
    }
    std::vector<int> y(train_idx.size());
    for (std::size_t i = 0; i < train_idx.size(); ++i) y[i] = ws.labels[train_idx[i]];

    Rng rng(cfg.seed);
    Rng init_rng = rng.fork(3);
    Rng shuffle_rng = rng.fork(4);
    r.model.voter.push_back(nn::make_dense(2 * C, cfg.voter_hidden, init_rng));
    r.model.voter.push_back(nn::make_dense(cfg.voter_hidden, C, init_rng));

    std::vector<nn::DenseParams> grads;
    for (auto& l : r.model.voter)
        grads.push_back({Matrix(l.W.rows, l.W.cols), std::vector<double>(l.b.size(), 0.0)});
    auto adam = detail::bind_adam({{r.model.voter[0].W.v.data(), r.model.voter[0].W.v.size()},
                                   {r.model.voter[0].b.data(), r.model.voter[0].b.size()},
                                   {r.model.voter[1].W.v.data(), r.model.voter[1].W.v.size()},
                                   {r.model.voter[1].b.data(), r.model.voter[1].b.size()}},
                                  {{grads[0].W.v.data(), grads[0].W.v.size()},
                                   {grads[0].b.data(), grads[0].b.size()},
                                   {grads[1].W.v.data(), grads[1].W.v.size()},
                                   {grads[1].b.data(), grads[1].b.size()}},
                                  cfg.learning_rate);

    EarlyStop stop(cfg.rel_loss_delta, cfg.stop_patience);
    r.voter_log.steps_per_epoch = (X.rows + cfg.batch_size - 1) / cfg.batch_size;
    for (int epoch = 0; epoch < cfg.voter_max_epochs; ++epoch) {
        auto order = detail::shuffled(X.rows, shuffle_rng);
        double epoch_loss = 0.0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - at);
            Matrix Xb(n, X.cols);
            std::vector<int> yb(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::copy(X[order[at + i]], X[order[at + i]] + X.cols, Xb[i]);
                yb[i] = y[order[at + i]];
            }
            std::vector<Matrix> acts;
            Matrix h = Xb;
            acts.push_back(h);
            h = affine(h, r.model.voter[0].W, r.model.voter[0].b);
            nn::apply_activation(h, nn::Activation::Relu);
            acts.push_back(h);
            Matrix logits = affine(h, r.model.voter[1].W, r.model.voter[1].b);
            Matrix dl;
            epoch_loss += nn::softmax_cross_entropy_batch(logits, yb, dl) * static_cast<double>(n);
            for (auto& g : grads) {
                g.W.zero();
                std::fill(g.b.begin(), g.b.end(), 0.0);
            }
            accumulate_affine_grads(dl, acts[1], grads[1].W, grads[1].b);
            Matrix delta = matmul(dl, r.model.voter[1].W);
            for (std::size_t k = 0; k < delta.v.size(); ++k)
                if (acts[1].v[k] <= 0.0) delta.v[k] = 0.0;
            accumulate_affine_grads(delta, acts[0], grads[0].W, grads[0].b);
            nn::adam_step(adam.refs, adam.state);
        }
        EpochLog el;
        el.train_loss = epoch_loss / static_cast<double>(X.rows);
        r.voter_log.epochs.push_back(el);
        if (stop.update(el.train_loss)) {
            r.voter_log.early_stopped = true;
            break;
        }
    }
    return r;
}

} // namespace omni::models
