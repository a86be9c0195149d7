#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "omni/matrix.hpp"

namespace omni {

// The 11 traffic classes. Order is fixed; it is the class-id table used by
// the models and the CSV label column.
enum class PacketClass : int {
    Normal = 0,
    Pump,
    T1,
    T2,
    HH,
    LL,
    H,
    L,
    SCAN,
    CRC,
    MITM,
};

constexpr int kNumClasses = 11;
constexpr int kNumFeatures = 19;

inline const std::array<std::string, kNumClasses>& class_names() {
    static const std::array<std::string, kNumClasses> names = {
        "Normal", "Pump", "T1", "T2", "HH", "LL", "H", "L", "SCAN", "CRC", "MITM"};
    return names;
}

inline const std::string& class_name(PacketClass c) { return class_names()[static_cast<int>(c)]; }

inline int class_id(const std::string& name) {
    const auto& names = class_names();
    for (int i = 0; i < kNumClasses; ++i)
        if (names[i] == name) return i;
    throw std::invalid_argument("unknown class label: " + name);
}

// Feature columns in capture order.
inline const std::array<std::string, kNumFeatures>& feature_names() {
    static const std::array<std::string, kNumFeatures> names = {
        "src_ip",          "dst_ip",           "src_port",       "dst_port",
        "tcp_seq",         "transaction_id",   "function_code",  "reference_number",
        "register_data",   "exception_code",   "timestamp",      "relative_time",
        "threshold_highest", "threshold_lowest", "threshold_high", "threshold_low",
        "pump_speed",      "tank1_level",      "tank2_level"};
    return names;
}

// A labeled capture: N x 19 raw feature rows plus per-row class ids.
// segment_starts marks the first row of each independently captured stream
// (windows never span a segment boundary).
struct Dataset {
    Matrix features;
    std::vector<int> labels;
    std::vector<std::uint32_t> segment_starts{0};

    std::size_t size() const { return labels.size(); }

    void append(const Dataset& other) {
        if (other.size() == 0) return;
        const std::uint32_t base = static_cast<std::uint32_t>(size());
        if (features.cols == 0) features.cols = other.features.cols;
        if (features.cols != other.features.cols)
            throw std::invalid_argument("dataset append: feature width mismatch");
        features.v.insert(features.v.end(), other.features.v.begin(), other.features.v.end());
        features.rows += other.features.rows;
        labels.insert(labels.end(), other.labels.begin(), other.labels.end());
        if (base == 0) {
            segment_starts = other.segment_starts;
        } else {
            for (std::uint32_t s : other.segment_starts) segment_starts.push_back(base + s);
        }
    }
};

namespace csv {

// One header row, the 19 feature columns in capture order, then `label`.
// Floats are written with enough digits to round-trip.
inline void write(const Dataset& ds, std::ostream& out) {
    const auto& fnames = feature_names();
    for (int c = 0; c < kNumFeatures; ++c) out << fnames[c] << ',';
    out << "label\n";
    char buf[32];
    for (std::size_t r = 0; r < ds.size(); ++r) {
        for (int c = 0; c < kNumFeatures; ++c) {
            const double v = ds.features[r][c];
            if (v == static_cast<double>(static_cast<long long>(v))) {
                out << static_cast<long long>(v);
            } else {
                std::snprintf(buf, sizeof buf, "%.12g", v);
                out << buf;
            }
            out << ',';
        }
        out << class_names()[ds.labels[r]] << '\n';
    }
}

inline void write_file(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write(ds, out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

inline Dataset read(std::istream& in) {
    Dataset ds;
    ds.features = Matrix(0, kNumFeatures);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: missing header");
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (int c = 0; c < kNumFeatures; ++c) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("csv: short row " + std::to_string(row + 2));
            ds.features.v.push_back(std::stod(cell));
        }
        if (!std::getline(ss, cell))
            throw std::runtime_error("csv: missing label on row " + std::to_string(row + 2));
        ds.labels.push_back(class_id(cell));
        ++row;
    }
    ds.features.rows = row;
    return ds;
}

inline Dataset read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    return read(in);
}

} // namespace csv
} // namespace omni
