#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>

namespace omni::plant {

// Register map of the two-tank PLC.
constexpr std::uint16_t kRegPumpSpeed = 32210;
constexpr std::uint16_t kRegTank1Level = 42210;
constexpr std::uint16_t kRegTank2Level = 42211;
constexpr std::uint16_t kRegThresholdHighest = 42212;
constexpr std::uint16_t kRegThresholdLowest = 42213;
constexpr std::uint16_t kRegThresholdHigh = 42214;
constexpr std::uint16_t kRegThresholdLow = 42215;

constexpr int kPumpSpeedMax = 10;

struct Thresholds {
    double highest = 90.0;
    double lowest = 10.0;
    double high = 80.0;
    double low = 20.0;

    bool ordered() const { return lowest <= low && low <= high && high <= highest; }
};

struct TankState {
    double tank1_level = 50.0;
    double tank2_level = 50.0;
    int pump_speed = 2;
    Thresholds thresholds;
};

// Linear dynamics: tank1 fills proportionally to pump speed and drains at a
// constant rate into tank2; tank2 drains at a constant outflow rate. Levels
// are clamped to [0, 100] and tank1 cannot transfer more than it holds.
struct PlantConfig {
    double fill_per_pump_unit = 0.25; // level units / s per pump step
    double tank1_to_tank2_rate = 0.5; // level units / s
    double tank2_outflow_rate = 0.5;  // level units / s
};

inline double clamp_level(double v) { return std::clamp(v, 0.0, 100.0); }

inline TankState step(const TankState& state, double dt, const PlantConfig& cfg = {}) {
    if (!(dt > 0.0)) throw std::invalid_argument("plant step requires dt > 0");
    TankState next = state;
    const double inflow = cfg.fill_per_pump_unit * state.pump_speed * dt;
    const double available = state.tank1_level + inflow;
    const double transfer = std::min(cfg.tank1_to_tank2_rate * dt, available);
    next.tank1_level = clamp_level(available - transfer);
    next.tank2_level = clamp_level(state.tank2_level + transfer - cfg.tank2_outflow_rate * dt);
    return next;
}

// 1 level unit = 1 register count, rounded half-up.
inline std::uint16_t quantize_level(double level) {
    return static_cast<std::uint16_t>(std::floor(level + 0.5));
}

class RegisterMap {
public:
    RegisterMap() {
        for (std::uint16_t addr : {kRegPumpSpeed, kRegTank1Level, kRegTank2Level,
                                   kRegThresholdHighest, kRegThresholdLowest,
                                   kRegThresholdHigh, kRegThresholdLow})
            regs_[addr] = 0;
    }

    bool contains(std::uint16_t addr) const { return regs_.count(addr) != 0; }

    // Unknown address -> empty (caller answers with Modbus exception 2).
    std::optional<std::uint16_t> read(std::uint16_t addr) const {
        auto it = regs_.find(addr);
        if (it == regs_.end()) return std::nullopt;
        return it->second;
    }

    bool write(std::uint16_t addr, std::uint16_t value) {
        auto it = regs_.find(addr);
        if (it == regs_.end()) return false;
        it->second = value;
        return true;
    }

    // Sensor registers reflect the tank state exactly after each step.
    void sync_from(const TankState& s) {
        regs_[kRegPumpSpeed] = static_cast<std::uint16_t>(s.pump_speed);
        regs_[kRegTank1Level] = quantize_level(s.tank1_level);
        regs_[kRegTank2Level] = quantize_level(s.tank2_level);
        regs_[kRegThresholdHighest] = quantize_level(s.thresholds.highest);
        regs_[kRegThresholdLowest] = quantize_level(s.thresholds.lowest);
        regs_[kRegThresholdHigh] = quantize_level(s.thresholds.high);
        regs_[kRegThresholdLow] = quantize_level(s.thresholds.low);
    }

    // The plant consumes written values on the next step.
    void apply_to(TankState& s) const {
        s.pump_speed = static_cast<int>(regs_.at(kRegPumpSpeed));
        s.tank1_level = regs_.at(kRegTank1Level);
        s.tank2_level = regs_.at(kRegTank2Level);
        s.thresholds.highest = regs_.at(kRegThresholdHighest);
        s.thresholds.lowest = regs_.at(kRegThresholdLowest);
        s.thresholds.high = regs_.at(kRegThresholdHigh);
        s.thresholds.low = regs_.at(kRegThresholdLow);
    }

private:
    std::map<std::uint16_t, std::uint16_t> regs_;
};

} // namespace omni::plant
