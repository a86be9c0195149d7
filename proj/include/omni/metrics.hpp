#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <future>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "omni/dataset.hpp"
#include "omni/models.hpp"

namespace omni::eval {

// Rows are actual classes, columns predicted. Entries are f64 so averaged
// matrices keep their fractional counts.
struct ConfusionMatrix {
    Matrix counts;

    explicit ConfusionMatrix(int c = 2) : counts(c, c) {}
    int classes() const { return static_cast<int>(counts.rows); }

    void add(int actual, int predicted, double weight = 1.0) {
        if (actual < 0 || actual >= classes() || predicted < 0 || predicted >= classes())
            throw std::invalid_argument("confusion: label out of range");
        counts[actual][predicted] += weight;
    }

    double total() const {
        double s = 0.0;
        for (double v : counts.v) s += v;
        return s;
    }
};

inline ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truths, int c) {
    if (preds.size() != truths.size()) throw std::invalid_argument("confusion: length mismatch");
    ConfusionMatrix cm(c);
    for (std::size_t i = 0; i < preds.size(); ++i) cm.add(truths[i], preds[i]);
    return cm;
}

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    bool zero_support = false;
};

struct Metrics {
    std::vector<ClassMetrics> per_class;
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    double accuracy = 0.0;
};

// Per-class precision/recall/F1 with 0/0 defined as 0 and zero-support
// classes flagged; macro values are unweighted means over all classes.
inline Metrics metrics(const ConfusionMatrix& cm) {
    const int C = cm.classes();
    Metrics m;
    m.per_class.resize(C);
    double diag = 0.0;
    for (int i = 0; i < C; ++i) {
        double tp = cm.counts[i][i];
        double fp = 0.0, fn = 0.0;
        for (int r = 0; r < C; ++r) {
            if (r != i) {
                fp += cm.counts[r][i];
                fn += cm.counts[i][r];
            }
        }
        diag += tp;
        ClassMetrics& c = m.per_class[i];
        c.zero_support = tp + fn == 0.0;
        c.precision = tp + fp > 0.0 ? tp / (tp + fp) : 0.0;
        c.recall = tp + fn > 0.0 ? tp / (tp + fn) : 0.0;
        c.f1 = c.precision + c.recall > 0.0 ? 2.0 * c.precision * c.recall / (c.precision + c.recall)
                                            : 0.0;
        m.macro_precision += c.precision;
        m.macro_recall += c.recall;
        m.macro_f1 += c.f1;
    }
    m.macro_precision /= C;
    m.macro_recall /= C;
    m.macro_f1 /= C;
    const double total = cm.total();
    m.accuracy = total > 0.0 ? diag / total : 0.0;
    return m;
}

// Mean and sample standard deviation of metrics over repeated trials.
struct MetricsSummary {
    int classes = 2;
    int trials = 0;
    bool single_trial = false; // std reported as 0 for k = 1
    std::vector<ClassMetrics> mean_per_class;
    std::vector<ClassMetrics> std_per_class;
    ClassMetrics mean_macro; // precision/recall/f1 carry the macro values
    ClassMetrics std_macro;
    ConfusionMatrix avg_confusion{2};
};

inline MetricsSummary summarize(const std::vector<Metrics>& trials,
                                const std::vector<ConfusionMatrix>& cms) {
    if (trials.empty()) throw std::invalid_argument("summarize: no trials");
    const int C = static_cast<int>(trials[0].per_class.size());
    MetricsSummary s;
    s.classes = C;
    s.trials = static_cast<int>(trials.size());
    s.single_trial = trials.size() == 1;
    s.mean_per_class.resize(C);
    s.std_per_class.resize(C);
    s.avg_confusion = ConfusionMatrix(C);

    auto accum = [&](auto get, auto set_mean, auto set_std) {
        for (int c = -1; c < C; ++c) {
            double sum = 0.0, sum2 = 0.0;
            for (const auto& t : trials) {
                const double v = get(t, c);
                sum += v;
                sum2 += v * v;
            }
            const double n = static_cast<double>(trials.size());
            const double mean = sum / n;
            double var = trials.size() > 1 ? std::max(0.0, (sum2 - n * mean * mean) / (n - 1.0)) : 0.0;
            set_mean(c, mean);
            set_std(c, std::sqrt(var));
        }
    };

    auto get_p = [](const Metrics& t, int c) { return c < 0 ? t.macro_precision : t.per_class[c].precision; };
    auto get_r = [](const Metrics& t, int c) { return c < 0 ? t.macro_recall : t.per_class[c].recall; };
    auto get_f = [](const Metrics& t, int c) { return c < 0 ? t.macro_f1 : t.per_class[c].f1; };
    accum(get_p, [&](int c, double v) { (c < 0 ? s.mean_macro.precision : s.mean_per_class[c].precision) = v; },
          [&](int c, double v) { (c < 0 ? s.std_macro.precision : s.std_per_class[c].precision) = v; });
    accum(get_r, [&](int c, double v) { (c < 0 ? s.mean_macro.recall : s.mean_per_class[c].recall) = v; },
          [&](int c, double v) { (c < 0 ? s.std_macro.recall : s.std_per_class[c].recall) = v; });
    accum(get_f, [&](int c, double v) { (c < 0 ? s.mean_macro.f1 : s.mean_per_class[c].f1) = v; },
          [&](int c, double v) { (c < 0 ? s.std_macro.f1 : s.std_per_class[c].f1) = v; });

    for (int c = 0; c < C; ++c) {
        bool zs = false;
        for (const auto& t : trials) zs = zs || t.per_class[c].zero_support;
        s.mean_per_class[c].zero_support = zs;
    }
    if (!cms.empty()) {
        for (const auto& cm : cms)
            for (std::size_t k = 0; k < cm.counts.v.size(); ++k)
                s.avg_confusion.counts.v[k] += cm.counts.v[k];
        for (double& v : s.avg_confusion.counts.v) v /= static_cast<double>(cms.size());
    }
    return s;
}

// ---------------------------------------------------------------------------
// Prediction helpers
// ---------------------------------------------------------------------------

inline std::vector<int> predict_fnn(const models::FnnModel& m, const Dataset& ds,
                                    const models::WindowSet& ws,
                                    std::span<const std::uint32_t> idx) {
    Matrix scaled = ds.features;
    features::transform_inplace(scaled, m.scaler);
    Matrix scores;
    models::fnn_scores_batch(m, scaled, ws, idx, scores);
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i)
        out[i] = models::argmax_label(std::span<const double>(scores[i], scores.cols));
    return out;
}

inline std::vector<int> predict_lstm(const models::LstmModel& m, const Dataset& ds,
                                     const models::WindowSet& ws,
                                     std::span<const std::uint32_t> idx) {
    Matrix scaled = ds.features;
    features::transform_inplace(scaled, m.scaler);
    Matrix scores;
    models::lstm_scores_batch(m, scaled, ws, idx, scores);
    std::vector<int> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (m.mode == models::Mode::Binary) {
            out[i] = scores[i][1] > 0.5 ? 1 : 0;
        } else {
            out[i] = models::argmax_label(std::span<const double>(scores[i], scores.cols));
        }
    }
    return out;
}

inline std::vector<int> predict_ensemble(const models::EnsembleModel& m, const Dataset& ds,
                                         const models::WindowSet& ws,
                                         std::span<const std::uint32_t> idx) {
    Matrix scaled_f = ds.features;
    features::transform_inplace(scaled_f, m.fnn.scaler);
    Matrix scaled_l = ds.features;
    features::transform_inplace(scaled_l, m.lstm.scaler);
    Matrix sf, sl;
    models::fnn_scores_batch(m.fnn, scaled_f, ws, idx, sf);
    models::lstm_scores_batch(m.lstm, scaled_l, ws, idx, sl);
    std::vector<int> out(idx.size());
    const int C = kNumClasses;
    const std::size_t bs = 4096;
    for (std::size_t at = 0; at < idx.size(); at += bs) {
        const std::size_t n = std::min(bs, idx.size() - at);
        Matrix X(n, static_cast<std::size_t>(2 * C));
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(sf[at + i], sf[at + i] + C, X[i]);
            std::copy(sl[at + i], sl[at + i] + C, X[i] + C);
        }
        Matrix logits = models::voter_logits(m, X);
        for (std::size_t i = 0; i < n; ++i)
            out[at + i] = models::argmax_label(std::span<const double>(logits[i], logits.cols));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Repeated-split protocol
// ---------------------------------------------------------------------------

struct SplitIndices {
    std::vector<std::uint32_t> train;
    std::vector<std::uint32_t> test;
};

inline SplitIndices random_split(std::size_t n, double train_fraction, std::uint64_t seed) {
    Rng rng(seed);
    auto order = models::detail::shuffled(n, rng);
    const std::size_t n_train = static_cast<std::size_t>(std::llround(train_fraction * n));
    SplitIndices s;
    s.train.assign(order.begin(), order.begin() + n_train);
    s.test.assign(order.begin() + n_train, order.end());
    return s;
}

struct RepeatedSplitResult {
    MetricsSummary summary;
    std::vector<Metrics> per_trial;
};

// k independent seeded random train/test splits; each trial trains from
// scratch and is evaluated on its held-out portion. Trials run in parallel
// and are reduced in seed order, so the report is deterministic.
inline RepeatedSplitResult repeated_split_eval(const Dataset& ds, const models::WindowSet& ws,
                                               models::ModelKind kind, models::Mode mode,
                                               const models::TrainConfig& cfg, int k = 10,
                                               double train_fraction = 0.7,
                                               int max_parallel = 0) {
    if (k < 1) throw std::invalid_argument("repeated_split_eval: k must be >= 1");
    const int C = models::num_classes(mode);

    // Every class present in the full dataset must appear in each split's
    // training portion.
    std::vector<char> present(kNumClasses, 0);
    for (int l : ws.labels) present[l] = 1;

    auto run_trial = [&](int trial) -> std::pair<Metrics, ConfusionMatrix> {
        const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(trial);
        SplitIndices split = random_split(ws.size(), train_fraction, seed * 0x9E3779B9u + 1);
        std::vector<char> seen(kNumClasses, 0);
        for (std::uint32_t w : split.train) seen[ws.labels[w]] = 1;
        for (int c = 0; c < kNumClasses; ++c)
            if (present[c] && !seen[c])
                throw std::runtime_error("repeated_split_eval: class " + class_names()[c] +
                                         " missing from training split (seed " +
                                         std::to_string(seed) + ")");
        models::TrainConfig tc = cfg;
        tc.seed = seed;
        std::vector<int> preds;
        if (kind == models::ModelKind::Fnn) {
            auto r = models::train_fnn(ds, ws, split.train, split.test, mode, tc);
            preds = predict_fnn(r.model, ds, ws, split.test);
        } else if (kind == models::ModelKind::Lstm) {
            auto r = models::train_lstm(ds, ws, split.train, split.test, mode, tc);
            preds = predict_lstm(r.model, ds, ws, split.test);
        } else {
            auto r = models::train_ensemble(ds, ws, split.train, split.test, tc);
            preds = predict_ensemble(r.model, ds, ws, split.test);
        }
        std::vector<int> truths(split.test.size());
        for (std::size_t i = 0; i < split.test.size(); ++i)
            truths[i] = models::map_label(ws.labels[split.test[i]], mode);
        ConfusionMatrix cm = confusion(preds, truths, C);
        return {metrics(cm), cm};
    };

    unsigned hw = std::thread::hardware_concurrency();
    const int workers = max_parallel > 0 ? max_parallel : std::max(1u, hw ? hw : 1u);

    std::vector<Metrics> per_trial(k);
    std::vector<ConfusionMatrix> cms(k, ConfusionMatrix(C));
    for (int base = 0; base < k; base += workers) {
        const int n = std::min(workers, k - base);
        std::vector<std::future<std::pair<Metrics, ConfusionMatrix>>> futs;
        for (int i = 0; i < n; ++i)
            futs.push_back(std::async(std::launch::async, run_trial, base + i));
        for (int i = 0; i < n; ++i) {
            auto [met, cm] = futs[i].get();
            per_trial[base + i] = std::move(met);
            cms[base + i] = std::move(cm);
        }
    }
    RepeatedSplitResult r;
    r.summary = summarize(per_trial, cms);
    r.per_trial = std::move(per_trial);
    return r;
}

// ---------------------------------------------------------------------------
// Learning curves
// ---------------------------------------------------------------------------

struct LearningCurvePoint {
    std::size_t size = 0;
    int trial = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
};

inline std::vector<LearningCurvePoint> learning_curve(const Dataset& ds,
                                                      const models::WindowSet& ws,
                                                      models::ModelKind kind, models::Mode mode,
                                                      const models::TrainConfig& cfg,
                                                      std::span<const std::size_t> sizes,
                                                      int trials = 10, double train_fraction = 0.7) {
    std::vector<LearningCurvePoint> out;
    for (std::size_t size : sizes) {
        for (int trial = 0; trial < trials; ++trial) {
            const std::uint64_t seed = cfg.seed + 977u * static_cast<std::uint64_t>(trial) + size;
            SplitIndices split = random_split(ws.size(), train_fraction, seed);
            if (size > split.train.size())
                throw std::invalid_argument("learning_curve: size exceeds training data");
            split.train.resize(size);
            models::TrainConfig tc = cfg;
            tc.seed = seed;
            LearningCurvePoint p;
            p.size = size;
            p.trial = trial;
            if (kind == models::ModelKind::Fnn) {
                auto r = models::train_fnn(ds, ws, split.train, split.test, mode, tc);
                p.train_loss = r.log.epochs.back().train_loss;
                p.test_loss = r.log.epochs.back().test_loss;
            } else {
                auto r = models::train_lstm(ds, ws, split.train, split.test, mode, tc);
                p.train_loss = r.log.epochs.back().train_loss;
                p.test_loss = r.log.epochs.back().test_loss;
            }
            out.push_back(p);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Online (streamed) evaluation
// ---------------------------------------------------------------------------

// Divides the prediction stream into `portions` equal contiguous portions
// and reports the mean and sample std of the macro-averaged metrics.
inline MetricsSummary portioned_metrics(std::span<const int> preds, std::span<const int> truths,
                                        int classes, int portions = 10) {
    if (preds.size() != truths.size() || preds.empty())
        throw std::invalid_argument("portioned_metrics: bad inputs");
    const std::size_t per = preds.size() / portions;
    if (per == 0) throw std::invalid_argument("portioned_metrics: too few samples");
    std::vector<Metrics> trials;
    std::vector<ConfusionMatrix> cms;
    for (int p = 0; p < portions; ++p) {
        const std::size_t lo = p * per;
        const std::size_t hi = p + 1 == portions ? preds.size() : lo + per;
        ConfusionMatrix cm = confusion(preds.subspan(lo, hi - lo), truths.subspan(lo, hi - lo),
                                       classes);
        trials.push_back(metrics(cm));
        cms.push_back(std::move(cm));
    }
    return summarize(trials, cms);
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

inline std::string report_text(const MetricsSummary& s, const std::string& title) {
    std::ostringstream os;
    os << title << " (" << s.trials << (s.trials == 1 ? " trial" : " trials");
    if (s.single_trial) os << "; std undefined, reported as 0";
    os << ")\n";
    char line[256];
    std::snprintf(line, sizeof line, "%-10s %18s %18s %18s\n", "class", "precision(%)", "recall(%)", "f1(%)");
    os << line;
    auto row = [&](const std::string& name, const ClassMetrics& mean, const ClassMetrics& sd,
                   bool zero_support) {
        std::snprintf(line, sizeof line, "%-10s %9.3f+-%6.3f %9.3f+-%6.3f %9.3f+-%6.3f%s\n",
                      name.c_str(), 100.0 * mean.precision, 100.0 * sd.precision,
                      100.0 * mean.recall, 100.0 * sd.recall, 100.0 * mean.f1, 100.0 * sd.f1,
                      zero_support ? "  [no support]" : "");
        os << line;
    };
    if (s.classes == 2) {
        row("Normal", s.mean_per_class[0], s.std_per_class[0], s.mean_per_class[0].zero_support);
        row("Attack", s.mean_per_class[1], s.std_per_class[1], s.mean_per_class[1].zero_support);
    } else {
        for (int c = 0; c < s.classes; ++c)
            row(class_names()[c], s.mean_per_class[c], s.std_per_class[c],
                s.mean_per_class[c].zero_support);
    }
    row("macro", s.mean_macro, s.std_macro, false);
    return os.str();
}

inline std::string report_csv(const MetricsSummary& s) {
    std::ostringstream os;
    os << "class,precision_mean,precision_std,recall_mean,recall_std,f1_mean,f1_std,zero_support\n";
    char line[256];
    auto row = [&](const std::string& name, const ClassMetrics& mean, const ClassMetrics& sd,
                   bool zs) {
        std::snprintf(line, sizeof line, "%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n", name.c_str(),
                      mean.precision, sd.precision, mean.recall, sd.recall, mean.f1, sd.f1,
                      zs ? 1 : 0);
        os << line;
    };
    if (s.classes == 2) {
        row("Normal", s.mean_per_class[0], s.std_per_class[0], s.mean_per_class[0].zero_support);
        row("Attack", s.mean_per_class[1], s.std_per_class[1], s.mean_per_class[1].zero_support);
    } else {
        for (int c = 0; c < s.classes; ++c)
            row(class_names()[c], s.mean_per_class[c], s.std_per_class[c],
                s.mean_per_class[c].zero_support);
    }
    row("macro", s.mean_macro, s.std_macro, false);
    return os.str();
}

inline std::string confusion_csv(const ConfusionMatrix& cm, bool binary) {
    std::ostringstream os;
    os << "actual\\predicted";
    const int C = cm.classes();
    for (int c = 0; c < C; ++c)
        os << ',' << (binary ? (c == 0 ? "Normal" : "Attack") : class_names()[c]);
    os << '\n';
    char num[40];
    for (int r = 0; r < C; ++r) {
        os << (binary ? (r == 0 ? "Normal" : "Attack") : class_names()[r]);
        for (int c = 0; c < C; ++c) {
            std::snprintf(num, sizeof num, ",%.9g", cm.counts[r][c]);
            os << num;
        }
        os << '\n';
    }
    return os.str();
}

inline std::string learning_curve_csv(std::span<const LearningCurvePoint> pts) {
    std::ostringstream os;
    os << "size,split,train_loss,test_loss\n";
    char line[160];
    for (const auto& p : pts) {
        std::snprintf(line, sizeof line, "%zu,%d,%.9g,%.9g\n", p.size, p.trial, p.train_loss,
                      p.test_loss);
        os << line;
    }
    return os.str();
}

} // namespace omni::eval
