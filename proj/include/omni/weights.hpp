#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "omni/models.hpp"

namespace omni::weights {

// Versioned binary container: magic, format version, model kind and mode,
// training seed, class-name table, scaler, then raw little-endian f64
// parameter blocks. Reload is bit-exact.
constexpr char kMagic[4] = {'O', 'I', 'D', 'W'};
constexpr std::uint32_t kVersion = 1;

using Model = std::variant<models::FnnModel, models::LstmModel, models::EnsembleModel>;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); }
inline void put_u64(std::ostream& out, std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); }
inline void put_f64s(std::ostream& out, const std::vector<double>& v) {
    put_u64(out, v.size());
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
}

inline std::uint32_t get_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
}
inline std::uint64_t get_u64(std::istream& in) {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
inline std::vector<double> get_f64s(std::istream& in) {
    std::vector<double> v(get_u64(in));
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * 8));
    return v;
}

inline void put_matrix(std::ostream& out, const Matrix& m) {
    put_u64(out, m.rows);
    put_u64(out, m.cols);
    out.write(reinterpret_cast<const char*>(m.v.data()), static_cast<std::streamsize>(m.v.size() * 8));
}

inline Matrix get_matrix(std::istream& in) {
    const std::uint64_t r = get_u64(in), c = get_u64(in);
    Matrix m(r, c);
    in.read(reinterpret_cast<char*>(m.v.data()), static_cast<std::streamsize>(m.v.size() * 8));
    return m;
}

inline void put_dense(std::ostream& out, const nn::DenseParams& p) {
    put_matrix(out, p.W);
    put_f64s(out, p.b);
}

inline nn::DenseParams get_dense(std::istream& in) {
    nn::DenseParams p;
    p.W = get_matrix(in);
    p.b = get_f64s(in);
    return p;
}

inline void put_lstm(std::ostream& out, const nn::LstmParams& p) {
    put_matrix(out, p.Wx);
    put_matrix(out, p.Wh);
    put_f64s(out, p.b);
}

inline nn::LstmParams get_lstm(std::istream& in) {
    nn::LstmParams p;
    p.Wx = get_matrix(in);
    p.Wh = get_matrix(in);
    p.b = get_f64s(in);
    return p;
}

inline void put_scaler(std::ostream& out, const features::ScalerStats& s) {
    put_f64s(out, s.mean);
    put_f64s(out, s.std_dev);
}

inline features::ScalerStats get_scaler(std::istream& in) {
    features::ScalerStats s;
    s.mean = get_f64s(in);
    s.std_dev = get_f64s(in);
    return s;
}

inline void put_fnn(std::ostream& out, const models::FnnModel& m) {
    put_u32(out, static_cast<std::uint32_t>(m.mode));
    put_scaler(out, m.scaler);
    put_u32(out, static_cast<std::uint32_t>(m.layers.size()));
    for (const auto& l : m.layers) put_dense(out, l);
}

inline models::FnnModel get_fnn(std::istream& in) {
    models::FnnModel m;
    m.mode = static_cast<models::Mode>(get_u32(in));
    m.scaler = get_scaler(in);
    const std::uint32_t n = get_u32(in);
    for (std::uint32_t i = 0; i < n; ++i) m.layers.push_back(get_dense(in));
    return m;
}

inline void put_lstm_model(std::ostream& out, const models::LstmModel& m) {
    put_u32(out, static_cast<std::uint32_t>(m.mode));
    put_u32(out, m.window);
    put_scaler(out, m.scaler);
    put_lstm(out, m.layer1);
    put_lstm(out, m.layer2);
    put_dense(out, m.head);
}

inline models::LstmModel get_lstm_model(std::istream& in) {
    models::LstmModel m;
    m.mode = static_cast<models::Mode>(get_u32(in));
    m.window = get_u32(in);
    m.scaler = get_scaler(in);
    m.layer1 = get_lstm(in);
    m.layer2 = get_lstm(in);
    m.head = get_dense(in);
    return m;
}

} // namespace detail

inline void save(const Model& model, std::uint64_t seed, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open weights file for writing: " + path);
    out.write(kMagic, 4);
    detail::put_u32(out, kVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(model.index()));
    detail::put_u64(out, seed);
    detail::put_u32(out, kNumClasses);
    for (const auto& name : class_names()) {
        detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
    }
    if (const auto* f = std::get_if<models::FnnModel>(&model)) {
        detail::put_fnn(out, *f);
    } else if (const auto* l = std::get_if<models::LstmModel>(&model)) {
        detail::put_lstm_model(out, *l);
    } else {
        const auto& e = std::get<models::EnsembleModel>(model);
        detail::put_u32(out, e.window);
        detail::put_fnn(out, e.fnn);
        detail::put_lstm_model(out, e.lstm);
        detail::put_u32(out, static_cast<std::uint32_t>(e.voter.size()));
        for (const auto& v : e.voter) detail::put_dense(out, v);
    }
    if (!out) throw std::runtime_error("weights write failed: " + path);
}

struct Loaded {
    Model model;
    std::uint64_t seed = 0;
};

inline Loaded load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open weights file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a weights file: " + path);
    if (detail::get_u32(in) != kVersion) throw std::runtime_error("unsupported weights version");
    const std::uint32_t kind = detail::get_u32(in);
    Loaded r;
    r.seed = detail::get_u64(in);
    const std::uint32_t n_classes = detail::get_u32(in);
    for (std::uint32_t c = 0; c < n_classes; ++c) {
        std::string name(detail::get_u32(in), '\0');
        in.read(name.data(), static_cast<std::streamsize>(name.size()));
    }
    if (kind == 0) {
        r.model = detail::get_fnn(in);
    } else if (kind == 1) {
        r.model = detail::get_lstm_model(in);
    } else if (kind == 2) {
        models::EnsembleModel e;
        e.window = detail::get_u32(in);
        e.fnn = detail::get_fnn(in);
        e.lstm = detail::get_lstm_model(in);
        const std::uint32_t nv = detail::get_u32(in);
        for (std::uint32_t i = 0; i < nv; ++i) e.voter.push_back(detail::get_dense(in));
        r.model = std::move(e);
    } else {
        throw std::runtime_error("unknown model kind in weights file");
    }
    if (!in) throw std::runtime_error("weights file truncated: " + path);
    return r;
}

} // namespace omni::weights
