#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "omni/matrix.hpp"

namespace omni::features {

constexpr double kRelativeTimeReset = 3000.0;

// Seconds since the session's first packet, reset to zero every 3000 s.
inline double relative_time(double timestamp, double session_start) {
    const double elapsed = timestamp - session_start;
    if (elapsed < 0.0) throw std::invalid_argument("relative_time: timestamp precedes session start");
    return std::fmod(elapsed, kRelativeTimeReset);
}

struct ScalerStats {
    std::vector<double> mean;
    std::vector<double> std_dev;
};

// Per-feature population mean and standard deviation. Fit on the training
// portion only.
inline ScalerStats fit_scaler(const Matrix& X) {
    if (X.rows == 0) throw std::invalid_argument("fit_scaler: empty dataset");
    ScalerStats s;
    s.mean.assign(X.cols, 0.0);
    s.std_dev.assign(X.cols, 0.0);
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t c = 0; c < X.cols; ++c) s.mean[c] += X[r][c];
    for (double& m : s.mean) m /= static_cast<double>(X.rows);
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t c = 0; c < X.cols; ++c) {
            const double d = X[r][c] - s.mean[c];
            s.std_dev[c] += d * d;
        }
    for (double& v : s.std_dev) v = std::sqrt(v / static_cast<double>(X.rows));
    return s;
}

// x' = (x - mean) / std, with zero-variance features mapped to 0.
inline void transform_inplace(Matrix& X, const ScalerStats& s) {
    if (X.cols != s.mean.size()) throw std::invalid_argument("transform: shape mismatch");
    for (std::size_t r = 0; r < X.rows; ++r)
        for (std::size_t c = 0; c < X.cols; ++c)
            X[r][c] = s.std_dev[c] == 0.0 ? 0.0 : (X[r][c] - s.mean[c]) / s.std_dev[c];
}

inline std::vector<double> transform(std::span<const double> x, const ScalerStats& s) {
    if (x.size() != s.mean.size()) throw std::invalid_argument("transform: shape mismatch");
    std::vector<double> out(x.size());
    for (std::size_t c = 0; c < x.size(); ++c)
        out[c] = s.std_dev[c] == 0.0 ? 0.0 : (x[c] - s.mean[c]) / s.std_dev[c];
    return out;
}

// Sliding windows of length t, stride 1, restricted to one contiguous
// segment per [begin, end) row range. A window is identified by the row
// index of its first packet; its label is the label of row start + t - 1.
inline std::vector<std::uint32_t> make_windows(std::uint32_t begin, std::uint32_t end,
                                               std::uint32_t t) {
    if (t < 1) throw std::invalid_argument("make_windows: t must be >= 1");
    std::vector<std::uint32_t> starts;
    if (end > begin && end - begin >= t)
        for (std::uint32_t s = begin; s + t <= end; ++s) starts.push_back(s);
    return starts;
}

} // namespace omni::features
