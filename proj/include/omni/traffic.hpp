#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "omni/dataset.hpp"
#include "omni/features.hpp"
#include "omni/modbus.hpp"
#include "omni/plant.hpp"
#include "omni/rng.hpp"

namespace omni::traffic {

// Simulated endpoints. The HMI master polls the PLCs; the Kali host issues
// both legitimate operator commands and attacks, as in the testbed.
constexpr std::uint32_t kMasterIp = 0x0A000002;  // 10.0.0.2
constexpr std::uint32_t kSlaveBaseIp = 0x0A000005; // 10.0.0.5
constexpr std::uint32_t kKaliIp = 0x0A000009;    // 10.0.0.9
constexpr std::uint16_t kModbusPort = 502;

// Forwarded copies inserted per shadowed poll response during an MITM episode.
constexpr int kMitmCopies = 3;

struct TrafficConfig {
    std::uint64_t seed = 1;
    std::uint64_t packet_target = 100000;

    // Normal traffic shape.
    double polling_period = 1.0;   // seconds between master polls
    double polling_jitter = 0.1;   // fraction of the period
    double response_delay_min = 0.002;
    double response_delay_max = 0.008;
    double kali_rate = 1.5;        // operator commands per second (Poisson)
    int control_write_every = 5;   // every n-th poll sends the desired pump speed
    int reassert_every = 30;       // every n-th poll rewrites one threshold
    int slave_count = 1;

    // Flood shape.
    double flood_packet_rate = 800.0; // packets per second inside a burst
    std::uint32_t flood_burst_len = 400;

    // MITM shape.
    double mitm_delay_min = 0.03;
    double mitm_delay_max = 0.12;
    std::uint32_t mitm_episode_groups = 120; // polls duplicated per episode

    // The honeypot PLCs occasionally return a garbage register word; the
    // corrupted reading is visible in that packet's snapshot only.
    double sensor_glitch_rate = 0.04;

    // Target per-class packet shares, indexed by PacketClass. Must be
    // non-negative and sum to 1.
    std::array<double, kNumClasses> mix{};

    TrafficConfig() { mix[0] = 1.0; }

    void validate() const {
        double sum = 0.0;
        for (double m : mix) {
            if (m < 0.0) throw std::invalid_argument("traffic config: negative mix ratio");
            sum += m;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw std::invalid_argument("traffic config: mix ratios must sum to 1");
        if (!(polling_period > 0.0)) throw std::invalid_argument("traffic config: polling period");
        if (!(flood_packet_rate > 0.0) || flood_burst_len == 0)
            throw std::invalid_argument("traffic config: flood parameters");
        if (packet_target == 0) throw std::invalid_argument("traffic config: packet target");
        if (slave_count < 1) throw std::invalid_argument("traffic config: slave count");
    }

    static TrafficConfig dataset_i(std::uint64_t seed = 7, std::uint64_t packets = 298700) {
        TrafficConfig c;
        c.seed = seed;
        c.packet_target = packets;
        const double uncorr = 0.22 / 7.0;
        c.mix.fill(0.0);
        for (int k = static_cast<int>(PacketClass::Pump); k <= static_cast<int>(PacketClass::L); ++k)
            c.mix[k] = uncorr;
        c.mix[static_cast<int>(PacketClass::Normal)] = 0.78;
        return c;
    }

    static TrafficConfig dataset_ii(std::uint64_t seed = 11, std::uint64_t packets = 201300) {
        TrafficConfig c;
        c.seed = seed;
        c.packet_target = packets;
        c.mix.fill(0.0);
        c.mix[static_cast<int>(PacketClass::Normal)] = 0.56;
        c.mix[static_cast<int>(PacketClass::SCAN)] = 0.16;
        c.mix[static_cast<int>(PacketClass::CRC)] = 0.16;
        c.mix[static_cast<int>(PacketClass::MITM)] = 0.12;
        return c;
    }

    static TrafficConfig online(std::uint64_t seed = 13, std::uint64_t packets = 120000) {
        TrafficConfig c;
        c.seed = seed;
        c.packet_target = packets;
        c.mix.fill(0.0);
        c.mix[static_cast<int>(PacketClass::Normal)] = 0.60;
        for (int k = static_cast<int>(PacketClass::Pump); k <= static_cast<int>(PacketClass::L); ++k)
            c.mix[k] = 0.028;
        c.mix[static_cast<int>(PacketClass::SCAN)] = 0.07;
        c.mix[static_cast<int>(PacketClass::CRC)] = 0.07;
        c.mix[static_cast<int>(PacketClass::MITM)] = 0.064;
        return c;
    }
};

// Out-of-policy write recipes for the seven temporally uncorrelated attacks.
// Value ranges keep a gap to every value legitimate traffic ever writes, so
// the generated corpus is separable by an exhaustive per-packet rule check.
struct AttackWrite {
    std::uint16_t reg;
    std::uint16_t value;
};

inline std::uint16_t attack_register(PacketClass kind) {
    switch (kind) {
        case PacketClass::Pump: return plant::kRegPumpSpeed;
        case PacketClass::T1: return plant::kRegTank1Level;
        case PacketClass::T2: return plant::kRegTank2Level;
        case PacketClass::HH: return plant::kRegThresholdHighest;
        case PacketClass::LL: return plant::kRegThresholdLowest;
        case PacketClass::H: return plant::kRegThresholdHigh;
        case PacketClass::L: return plant::kRegThresholdLow;
        default: throw std::invalid_argument("not an uncorrelated attack class");
    }
}

inline AttackWrite draw_attack_write(PacketClass kind, Rng& rng) {
    const std::uint16_t reg = attack_register(kind);
    std::uint16_t v = 0;
    switch (kind) {
        case PacketClass::Pump: v = static_cast<std::uint16_t>(rng.uniform_int(15, 60)); break;
        case PacketClass::T1:
        case PacketClass::T2: v = static_cast<std::uint16_t>(rng.uniform_int(101, 120)); break;
        case PacketClass::HH: v = static_cast<std::uint16_t>(rng.uniform_int(0, 75)); break;
        case PacketClass::LL: v = static_cast<std::uint16_t>(rng.uniform_int(25, 120)); break;
        case PacketClass::H:
            v = rng.bernoulli(0.5) ? static_cast<std::uint16_t>(rng.uniform_int(0, 19))
                                   : static_cast<std::uint16_t>(rng.uniform_int(91, 120));
            break;
        case PacketClass::L:
            v = rng.bernoulli(0.5) ? static_cast<std::uint16_t>(rng.uniform_int(0, 9))
                                   : static_cast<std::uint16_t>(rng.uniform_int(81, 120));
            break;
        default: throw std::invalid_argument("not an uncorrelated attack class");
    }
    return {reg, v};
}

namespace detail {

enum class Endpoint { Master, Kali };

// The shared recipe table: every event style legitimate traffic produces.
// Flood mimicry draws from the same table with the same weights, which is
// what makes flood packets per-packet indistinguishable from normal ones.
enum class EventStyle { MasterPoll, MasterCtl, MasterReassert, KaliRead, KaliPumpWrite, KaliReassert };

struct ScheduledPacket {
    double time = 0.0;
    Endpoint client = Endpoint::Master;
    int slave = 0;
    bool is_request = true;
    std::uint8_t function_code = modbus::kReadHoldingRegisters;
    std::uint16_t reference = 0;
    std::uint16_t write_value = 0;   // fc16 request payload
    bool fill_pump_from_controller = false; // control write: value decided at replay
    std::uint8_t exception = 0;
    bool corrupt_crc = false;
    bool replayed = false;           // flood mimic or MITM duplicate
    int label = 0;
    int event_id = 0;
    int dup_of_event = -1;           // MITM: event whose request is copied
};

struct EventLogEntry {
    PacketClass label = PacketClass::Normal;
    EventStyle style = EventStyle::MasterPoll;
    bool attack_write = false; // honeypot restores the register afterwards
};

} // namespace detail

// Everything generate() knows about one emitted packet beyond the 19
// features, kept for oracle checks; not part of the CSV schema.
struct PacketMeta {
    int event_id = 0;
    bool checksum_mismatch = false;
    bool is_request = true;
};

class TrafficEngine {
public:
    explicit TrafficEngine(TrafficConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.validate();
        derive_schedule();
    }

    const TrafficConfig& config() const { return cfg_; }

    // Derived steady-state packet rate (packets per simulated second).
    double packet_rate() const { return total_rate_; }

    Dataset generate() {
        schedule_all();
        return replay();
    }

    const std::vector<PacketMeta>& meta() const { return meta_; }
    const std::vector<detail::EventLogEntry>& event_log() const { return events_; }

private:
    using EventStyle = detail::EventStyle;
    using Endpoint = detail::Endpoint;
    using ScheduledPacket = detail::ScheduledPacket;
    using EventLogEntry = detail::EventLogEntry;

    TrafficConfig cfg_;

    // Derived scheduling rates.
    double total_rate_ = 0.0;
    double kali_attack_prob_ = 0.0;
    double scan_burst_rate_ = 0.0;
    double crc_burst_rate_ = 0.0;
    double mitm_episode_rate_ = 0.0;
    double duration_ = 0.0;
    std::array<double, 7> uncorr_weights_{}; // normalized over Pump..L

    std::vector<ScheduledPacket> packets_;
    std::vector<EventLogEntry> events_;
    std::vector<PacketMeta> meta_;

    // Recipe weights for flood mimicry, normalized over EventStyle.
    std::array<double, 6> style_weights_{};

    void derive_schedule() {
        const auto& m = cfg_.mix;
        double uncorr = 0.0;
        for (int k = static_cast<int>(PacketClass::Pump); k <= static_cast<int>(PacketClass::L); ++k)
            uncorr += m[k];
        const double scan = m[static_cast<int>(PacketClass::SCAN)];
        const double crc = m[static_cast<int>(PacketClass::CRC)];
        const double mitm = m[static_cast<int>(PacketClass::MITM)];

        const double master_pairs =
            (1.0 + 1.0 / cfg_.control_write_every + 1.0 / cfg_.reassert_every) / cfg_.polling_period;
        const double base = 2.0 * master_pairs + 2.0 * cfg_.kali_rate;
        const double denom = 1.0 - scan - crc - mitm;
        if (denom <= 0.0) throw std::invalid_argument("traffic config: flood/mitm shares too large");
        total_rate_ = base / denom;

        // Each kali command is a request/response pair; an attack command
        // contributes one attack-labeled packet.
        kali_attack_prob_ = uncorr * total_rate_ / cfg_.kali_rate;
        if (kali_attack_prob_ > 1.0)
            throw std::invalid_argument("traffic config: uncorrelated share unreachable at this kali rate");
        if (uncorr > 0.0) {
            for (int k = 0; k < 7; ++k)
                uncorr_weights_[k] = m[static_cast<int>(PacketClass::Pump) + k] / uncorr;
        }

        scan_burst_rate_ = scan * total_rate_ / cfg_.flood_burst_len;
        crc_burst_rate_ = crc * total_rate_ / cfg_.flood_burst_len;
        mitm_episode_rate_ =
            mitm * total_rate_ / (static_cast<double>(kMitmCopies) * cfg_.mitm_episode_groups);
        duration_ = static_cast<double>(cfg_.packet_target) / total_rate_ * 1.25 + 60.0;

        // Normal event rates per second, used as mimic weights.
        const double polls = 1.0 / cfg_.polling_period;
        std::array<double, 6> w = {
            polls,
            polls / cfg_.control_write_every,
            polls / cfg_.reassert_every,
            cfg_.kali_rate * 0.7,
            cfg_.kali_rate * 0.2,
            cfg_.kali_rate * 0.1,
        };
        double sum = 0.0;
        for (double x : w) sum += x;
        for (int i = 0; i < 6; ++i) style_weights_[i] = w[i] / sum;
    }

    int new_event(PacketClass label, EventStyle style, bool attack_write = false) {
        events_.push_back({label, style, attack_write});
        return static_cast<int>(events_.size()) - 1;
    }

    // Master poll register cycle: the two tank sensors, with the pump-speed
    // register read every eighth poll.
    static std::uint16_t poll_register(long n) {
        if (n % 8 == 7) return plant::kRegPumpSpeed;
        return n % 2 == 0 ? plant::kRegTank1Level : plant::kRegTank2Level;
    }

    std::uint16_t draw_poll_register(Rng& rng) const {
        const double u = rng.uniform();
        if (u < 2.0 / 16.0) return plant::kRegPumpSpeed;
        return u < 9.0 / 16.0 ? plant::kRegTank1Level : plant::kRegTank2Level;
    }

    std::uint16_t draw_kali_read_register(Rng& rng) const {
        static constexpr std::uint16_t regs[6] = {
            plant::kRegTank1Level, plant::kRegTank2Level, plant::kRegPumpSpeed,
            plant::kRegThresholdHighest, plant::kRegThresholdLowest, plant::kRegThresholdHigh};
        static constexpr double cum[6] = {0.30, 0.60, 0.75, 0.8125, 0.875, 0.9375};
        const double u = rng.uniform();
        for (int i = 0; i < 6; ++i)
            if (u < cum[i]) return regs[i];
        return plant::kRegThresholdLow;
    }

    // Legal threshold reconfiguration bands. Any combination drawn from
    // these stays ordered (lowest <= low <= high <= highest) and keeps a
    // clear gap to every attack value range.
    static std::uint16_t reassert_value(std::uint16_t reg, Rng& rng) {
        switch (reg) {
            case plant::kRegThresholdHighest: return static_cast<std::uint16_t>(rng.uniform_int(86, 96));
            case plant::kRegThresholdLowest: return static_cast<std::uint16_t>(rng.uniform_int(6, 14));
            case plant::kRegThresholdHigh: return static_cast<std::uint16_t>(rng.uniform_int(76, 84));
            default: return static_cast<std::uint16_t>(rng.uniform_int(16, 24));
        }
    }

    static std::uint16_t reassert_register(long n) {
        static constexpr std::uint16_t regs[4] = {
            plant::kRegThresholdHighest, plant::kRegThresholdLowest,
            plant::kRegThresholdHigh, plant::kRegThresholdLow};
        return regs[n % 4];
    }

    // Emit one request/response pair for an event style. Used for real
    // master/kali traffic and, with replayed=true, for flood mimicry.
    void push_event(EventStyle style, double t, double resp_delay, Rng& rng, PacketClass label,
                    bool replayed, bool corrupt, int slave) {
        ScheduledPacket req;
        req.time = t;
        req.slave = slave;
        req.replayed = replayed;
        req.corrupt_crc = corrupt;
        req.label = static_cast<int>(label);
        req.event_id = new_event(label, style);

        switch (style) {
            case EventStyle::MasterPoll:
                req.client = Endpoint::Master;
                req.function_code = modbus::kReadHoldingRegisters;
                req.reference = draw_poll_register(rng);
                break;
            case EventStyle::MasterCtl:
                req.client = Endpoint::Master;
                req.function_code = modbus::kWriteMultipleRegisters;
                req.reference = plant::kRegPumpSpeed;
                req.fill_pump_from_controller = true;
                break;
            case EventStyle::MasterReassert: {
                req.client = Endpoint::Master;
                req.function_code = modbus::kWriteMultipleRegisters;
                req.reference = reassert_register(rng.uniform_int(0, 3));
                req.write_value = reassert_value(req.reference, rng);
                break;
            }
            case EventStyle::KaliRead:
                req.client = Endpoint::Kali;
                req.function_code = modbus::kReadHoldingRegisters;
                req.reference = draw_kali_read_register(rng);
                break;
            case EventStyle::KaliPumpWrite:
                req.client = Endpoint::Kali;
                req.function_code = modbus::kWriteMultipleRegisters;
                req.reference = plant::kRegPumpSpeed;
                req.write_value = static_cast<std::uint16_t>(rng.uniform_int(0, plant::kPumpSpeedMax));
                break;
            case EventStyle::KaliReassert: {
                req.client = Endpoint::Kali;
                req.function_code = modbus::kWriteMultipleRegisters;
                req.reference = reassert_register(rng.uniform_int(0, 3));
                req.write_value = reassert_value(req.reference, rng);
                break;
            }
        }

        ScheduledPacket resp = req;
        resp.is_request = false;
        resp.time = t + resp_delay;
        resp.corrupt_crc = false;
        if (corrupt) {
            // The honeypot slave answers a bad-checksum frame with an
            // exception instead of acting on it.
            resp.exception = modbus::kSlaveDeviceFailure;
            resp.function_code = static_cast<std::uint8_t>(req.function_code | modbus::kExceptionBit);
        }
        packets_.push_back(req);
        packets_.push_back(resp);
    }

    EventStyle draw_style(Rng& rng) const {
        const double u = rng.uniform();
        double acc = 0.0;
        for (int i = 0; i < 6; ++i) {
            acc += style_weights_[i];
            if (u < acc) return static_cast<EventStyle>(i);
        }
        return EventStyle::KaliReassert;
    }

    double resp_delay(Rng& rng) const {
        return rng.uniform(cfg_.response_delay_min, cfg_.response_delay_max);
    }

    void schedule_master(Rng rng) {
        double t = rng.uniform(0.0, cfg_.polling_period);
        long n = 0;
        while (t < duration_) {
            ScheduledPacket req;
            req.time = t;
            req.client = Endpoint::Master;
            req.slave = static_cast<int>(n % cfg_.slave_count);
            req.function_code = modbus::kReadHoldingRegisters;
            req.reference = poll_register(n / cfg_.slave_count);
            req.label = static_cast<int>(PacketClass::Normal);
            req.event_id = new_event(PacketClass::Normal, EventStyle::MasterPoll);

            ScheduledPacket resp = req;
            resp.is_request = false;
            resp.time = t + resp_delay(rng);
            packets_.push_back(req);
            packets_.push_back(resp);
            const double pair_end = resp.time;

            double extra = 0.0;
            if (n % cfg_.control_write_every == cfg_.control_write_every - 1) {
                extra = rng.uniform(0.02, 0.08);
                push_event(EventStyle::MasterCtl, pair_end + extra, resp_delay(rng), rng,
                           PacketClass::Normal, false, false, req.slave);
            }
            if (n % cfg_.reassert_every == cfg_.reassert_every - 1) {
                push_event(EventStyle::MasterReassert, pair_end + extra + rng.uniform(0.02, 0.08),
                           resp_delay(rng), rng, PacketClass::Normal, false, false, req.slave);
            }
            ++n;
            t += cfg_.polling_period * (1.0 + cfg_.polling_jitter * rng.uniform(-1.0, 1.0));
        }
    }

    void schedule_kali(Rng rng) {
        double t = rng.exponential(cfg_.kali_rate);
        while (t < duration_) {
            const int slave = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg_.slave_count)));
            if (rng.bernoulli(kali_attack_prob_)) {
                // One out-of-policy fc16 write riding the same command
                // schedule as legitimate kali traffic.
                double u = rng.uniform();
                int k = 0;
                double acc = 0.0;
                for (; k < 6; ++k) {
                    acc += uncorr_weights_[k];
                    if (u < acc) break;
                }
                const auto kind = static_cast<PacketClass>(static_cast<int>(PacketClass::Pump) + k);
                const AttackWrite aw = draw_attack_write(kind, rng);

                ScheduledPacket req;
                req.time = t;
                req.client = Endpoint::Kali;
                req.slave = slave;
                req.function_code = modbus::kWriteMultipleRegisters;
                req.reference = aw.reg;
                req.write_value = aw.value;
                req.label = static_cast<int>(kind);
                req.event_id = new_event(kind, EventStyle::KaliPumpWrite, true);

                ScheduledPacket resp = req;
                resp.is_request = false;
                resp.time = t + resp_delay(rng);
                resp.label = static_cast<int>(PacketClass::Normal); // slave echo
                packets_.push_back(req);
                packets_.push_back(resp);
            } else {
                const double u = rng.uniform();
                EventStyle style = u < 0.7 ? EventStyle::KaliRead
                                 : u < 0.9 ? EventStyle::KaliPumpWrite
                                           : EventStyle::KaliReassert;
                push_event(style, t, resp_delay(rng), rng, PacketClass::Normal, false, false, slave);
            }
            t += rng.exponential(cfg_.kali_rate);
        }
    }

    // Flood bursts. SCAN replays mimicked request/response traffic at the
    // burst rate: the attack tool blasts all requests back to back and the
    // starved slave answers in one batch, so a burst is a run of requests
    // followed by a run of responses. CRC interleaves corrupted requests
    // with the exception responses they provoke.
    void schedule_floods(PacketClass kind, double burst_rate, Rng rng) {
        if (burst_rate <= 0.0) return;
        // Jittered grid rather than a free Poisson process: the burst count
        // over the run is then deterministic, which pins the class shares.
        const double spacing = 1.0 / burst_rate;
        for (long k = 0; (k + 1.0) * spacing < duration_; ++k) {
            const double t = (k + 0.15 + 0.7 * rng.uniform()) * spacing;
            const std::uint32_t pairs = cfg_.flood_burst_len / 2;
            const double dt = 1.0 / cfg_.flood_packet_rate;
            const std::size_t first = packets_.size();
            for (std::uint32_t i = 0; i < pairs; ++i) {
                const EventStyle style = draw_style(rng);
                const int slave = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(cfg_.slave_count)));
                if (kind == PacketClass::SCAN) {
                    push_event(style, 0.0, 0.0, rng, PacketClass::SCAN, true, false, slave);
                    // request run first, response run after it
                    packets_[packets_.size() - 2].time = t + i * dt;
                    packets_[packets_.size() - 1].time = t + (pairs + i) * dt;
                } else {
                    push_event(style, t + 2 * i * dt, dt, rng, PacketClass::CRC, true, true, slave);
                }
            }
            for (std::size_t p = first; p < packets_.size(); ++p) packets_[p].replayed = true;
        }
    }

    // MITM episodes shadow consecutive master poll pairs: the spoofed relay
    // forwards each response again after a delay, so the tap records the
    // original pair plus delayed duplicate responses with perturbed sequence
    // numbers. Only the inserted copies are labeled MITM; the original pair
    // is untouched, so disabling MITM reproduces the normal stream exactly.
    void schedule_mitm(Rng rng) {
        if (mitm_episode_rate_ <= 0.0) return;
        // Collect master poll responses (time, packet index).
        std::vector<std::pair<double, std::size_t>> polls;
        for (std::size_t i = 0; i < packets_.size(); ++i) {
            const auto& p = packets_[i];
            if (p.client == Endpoint::Master && !p.is_request && !p.replayed &&
                p.function_code == modbus::kReadHoldingRegisters)
                polls.emplace_back(p.time, i);
        }
        std::sort(polls.begin(), polls.end());

        const double spacing = 1.0 / mitm_episode_rate_;
        std::size_t cursor = 0;
        for (long k = 0; (k + 1.0) * spacing < duration_; ++k) {
            const double t = (k + 0.1 + 0.5 * rng.uniform()) * spacing;
            while (cursor < polls.size() && polls[cursor].first < t) ++cursor;
            std::uint32_t g = 0;
            for (; cursor < polls.size() && g < cfg_.mitm_episode_groups; ++cursor, ++g) {
                const auto& resp = packets_[polls[cursor].second];
                ScheduledPacket dup = resp;
                dup.replayed = true;
                dup.label = static_cast<int>(PacketClass::MITM);
                dup.dup_of_event = resp.event_id;
                double at = resp.time + rng.uniform(cfg_.mitm_delay_min, cfg_.mitm_delay_max);
                for (int copy = 0; copy < kMitmCopies; ++copy) {
                    dup.event_id = new_event(PacketClass::MITM, EventStyle::MasterPoll);
                    dup.time = at;
                    packets_.push_back(dup);
                    at += rng.uniform(0.005, 0.02);
                }
            }
            if (cursor >= polls.size()) break;
        }
    }

    void schedule_all() {
        packets_.clear();
        events_.clear();
        Rng base(cfg_.seed);
        schedule_master(base.fork(1));
        schedule_kali(base.fork(2));
        schedule_floods(PacketClass::SCAN, scan_burst_rate_, base.fork(3));
        schedule_floods(PacketClass::CRC, crc_burst_rate_, base.fork(4));
        schedule_mitm(base.fork(5));
        std::stable_sort(packets_.begin(), packets_.end(),
                         [](const ScheduledPacket& a, const ScheduledPacket& b) { return a.time < b.time; });
        if (packets_.size() > cfg_.packet_target) packets_.resize(cfg_.packet_target);
    }

    struct Flow {
        std::uint32_t seq;
    };

    // Chronological replay: plant stepping, register writes with honeypot
    // restore for attack writes, transaction/sequence assignment, real
    // encode/decode through the codec, and feature extraction.
    Dataset replay() {
        Dataset ds;
        ds.features = Matrix(0, kNumFeatures);
        ds.features.v.reserve(packets_.size() * kNumFeatures);
        ds.labels.reserve(packets_.size());
        meta_.clear();
        meta_.reserve(packets_.size());

        Rng base(cfg_.seed);
        Rng mimic_rng = base.fork(7); // tid/seq jitter for flood replays
        Rng dup_rng = base.fork(8);   // tid/seq jitter for MITM duplicates

        std::vector<plant::TankState> states(cfg_.slave_count);
        std::vector<plant::RegisterMap> registers(cfg_.slave_count);
        const plant::PlantConfig plant_cfg;
        for (int s = 0; s < cfg_.slave_count; ++s) registers[s].sync_from(states[s]);

        const std::uint16_t master_port =
            static_cast<std::uint16_t>(49152 + base.fork(9).next_below(16000));
        const std::uint16_t kali_port =
            static_cast<std::uint16_t>(49152 + base.fork(10).next_below(16000));

        std::uint16_t master_tid = static_cast<std::uint16_t>(base.fork(11).next_below(65536));
        std::uint16_t kali_tid = static_cast<std::uint16_t>(base.fork(12).next_below(65536));
        std::map<int, std::uint16_t> event_tid; // event id -> request tid

        // Directional flows keyed by (client endpoint, slave, direction).
        std::map<std::tuple<int, int, int>, Flow> flows;
        Rng seq_seed = base.fork(13);
        auto flow_seq = [&](int client, int slave, int dir) -> Flow& {
            auto key = std::make_tuple(client, slave, dir);
            auto it = flows.find(key);
            if (it == flows.end())
                it = flows.emplace(key, Flow{static_cast<std::uint32_t>(seq_seed.next_u64())}).first;
            return it->second;
        };

        std::map<std::pair<std::uint32_t, std::uint32_t>, double> session_start;
        double plant_time = 0.0;

        for (const auto& pkt : packets_) {
            for (int s = 0; s < cfg_.slave_count; ++s) {
                if (pkt.time > plant_time) {
                    states[s] = plant::step(states[s], pkt.time - plant_time, plant_cfg);
                    registers[s].sync_from(states[s]);
                }
            }
            if (pkt.time > plant_time) plant_time = pkt.time;

            plant::TankState& st = states[pkt.slave];
            plant::RegisterMap& regs = registers[pkt.slave];
            const auto& ev = events_[pkt.event_id];

            // Transaction id.
            std::uint16_t tid;
            if (pkt.dup_of_event >= 0) {
                tid = event_tid.count(pkt.dup_of_event) ? event_tid[pkt.dup_of_event]
                                                        : master_tid;
            } else if (pkt.is_request) {
                if (pkt.replayed) {
                    // Replayed traffic carries a recently seen transaction id.
                    const std::uint16_t cur = pkt.client == Endpoint::Master ? master_tid : kali_tid;
                    tid = static_cast<std::uint16_t>(cur - static_cast<std::uint16_t>(mimic_rng.next_below(400)));
                } else if (pkt.client == Endpoint::Master) {
                    tid = master_tid++;
                } else {
                    tid = kali_tid++;
                }
                event_tid[pkt.event_id] = tid;
            } else {
                tid = event_tid.count(pkt.event_id) ? event_tid[pkt.event_id] : 0;
            }

            // Pump control value is decided against the live tank level.
            std::uint16_t write_value = pkt.write_value;
            if (pkt.fill_pump_from_controller) {
                int pump = st.pump_speed;
                if (st.tank1_level > 60.0) pump = 1;
                else if (st.tank1_level < 40.0) pump = 3;
                write_value = static_cast<std::uint16_t>(pump);
            }

            // Apply writes. Attack writes are restored immediately: the
            // honeypot's defense wall re-asserts policy, so only the attack
            // packet's own snapshot shows the spoofed value.
            const bool is_write_req = pkt.is_request &&
                                      pkt.function_code == modbus::kWriteMultipleRegisters &&
                                      !pkt.corrupt_crc;
            std::uint16_t saved_reg = 0;
            plant::TankState saved_state = st;
            const bool attack_write = is_write_req && ev.attack_write;
            if (is_write_req) {
                saved_reg = regs.read(pkt.reference).value_or(0);
                regs.write(pkt.reference, write_value);
                apply_register_to_state(pkt.reference, write_value, st);
            }

            // Transient sensor glitch on read responses: the PLC returns a
            // garbage word and the tap's snapshot sees the corrupted
            // register for this packet only. The decision is a hash of the
            // packet's identity, so toggling other traffic sources leaves
            // it unchanged.
            bool glitched = false;
            std::uint16_t glitch_saved = 0;
            if (pkt.function_code == modbus::kReadHoldingRegisters && !pkt.is_request &&
                pkt.exception == 0 && cfg_.sensor_glitch_rate > 0.0) {
                std::uint64_t h = cfg_.seed ^ (0xa076'1d64'78bd'642fULL +
                                               static_cast<std::uint64_t>(pkt.event_id) * 2u +
                                               (pkt.is_request ? 1u : 0u));
                Rng ghash(h);
                if (ghash.uniform() < cfg_.sensor_glitch_rate) {
                    glitched = true;
                    glitch_saved = regs.read(pkt.reference).value_or(0);
                    regs.write(pkt.reference, static_cast<std::uint16_t>(ghash.uniform_int(0, 120)));
                }
            }

            // Read value for fc3 responses at emission time.
            std::uint16_t data_word = 0;
            if (pkt.function_code == modbus::kReadHoldingRegisters && !pkt.is_request)
                data_word = regs.read(pkt.reference).value_or(0);
            else if (pkt.function_code == modbus::kWriteMultipleRegisters && pkt.is_request)
                data_word = write_value;

            // Endpoints.
            const std::uint32_t client_ip = pkt.client == Endpoint::Master ? kMasterIp : kKaliIp;
            const std::uint16_t client_port = pkt.client == Endpoint::Master ? master_port : kali_port;
            const std::uint32_t slave_ip = kSlaveBaseIp + static_cast<std::uint32_t>(pkt.slave);
            const std::uint32_t src_ip = pkt.is_request ? client_ip : slave_ip;
            const std::uint32_t dst_ip = pkt.is_request ? slave_ip : client_ip;
            const std::uint16_t src_port = pkt.is_request ? client_port : kModbusPort;
            const std::uint16_t dst_port = pkt.is_request ? kModbusPort : client_port;

            // Build the frame and run it through the codec.
            modbus::ModbusTcpFrame frame;
            frame.transaction_id = tid;
            frame.unit_id = static_cast<std::uint8_t>(1 + pkt.slave);
            frame.function_code = pkt.function_code;
            if (pkt.exception != 0) {
                frame.exception_code = pkt.exception;
            } else if (pkt.function_code == modbus::kReadHoldingRegisters) {
                if (pkt.is_request) {
                    frame.reference_number = pkt.reference;
                    frame.register_count = 1;
                } else {
                    frame.register_count = 1;
                    frame.data = {data_word};
                }
            } else {
                frame.reference_number = pkt.reference;
                frame.register_count = 1;
                if (pkt.is_request) frame.data = {write_value};
            }
            std::vector<std::uint8_t> bytes = modbus::encode(frame);
            if (pkt.corrupt_crc) bytes.back() ^= 0x5A;
            const auto decoded = modbus::decode(bytes);
            const auto& dec = std::get<modbus::Decoded>(decoded);

            // Sequence numbers advance per directional flow; replayed and
            // duplicated packets carry a perturbed recent value.
            const int dir = pkt.is_request ? 0 : 1;
            Flow& flow = flow_seq(pkt.client == Endpoint::Master ? 0 : 1, pkt.slave, dir);
            std::uint32_t seq;
            if (pkt.dup_of_event >= 0) {
                seq = flow.seq + static_cast<std::uint32_t>(dup_rng.uniform_int(1, 64));
            } else if (pkt.replayed) {
                seq = flow.seq - static_cast<std::uint32_t>(mimic_rng.next_below(2048));
            } else {
                seq = flow.seq;
                flow.seq += static_cast<std::uint32_t>(bytes.size());
            }

            // Session-relative time, keyed by the unordered address pair.
            const auto skey = std::make_pair(std::min(src_ip, dst_ip), std::max(src_ip, dst_ip));
            auto sit = session_start.find(skey);
            if (sit == session_start.end()) sit = session_start.emplace(skey, pkt.time).first;
            const double rel = features::relative_time(pkt.time, sit->second);

            // 19 features in capture order.
            const double row[kNumFeatures] = {
                static_cast<double>(src_ip),
                static_cast<double>(dst_ip),
                static_cast<double>(src_port),
                static_cast<double>(dst_port),
                static_cast<double>(seq),
                static_cast<double>(dec.frame.transaction_id),
                static_cast<double>(dec.frame.function_code),
                static_cast<double>(pkt.reference),
                static_cast<double>(data_word),
                static_cast<double>(dec.frame.exception_code.value_or(0)),
                pkt.time,
                rel,
                static_cast<double>(regs.read(plant::kRegThresholdHighest).value_or(0)),
                static_cast<double>(regs.read(plant::kRegThresholdLowest).value_or(0)),
                static_cast<double>(regs.read(plant::kRegThresholdHigh).value_or(0)),
                static_cast<double>(regs.read(plant::kRegThresholdLow).value_or(0)),
                static_cast<double>(regs.read(plant::kRegPumpSpeed).value_or(0)),
                static_cast<double>(regs.read(plant::kRegTank1Level).value_or(0)),
                static_cast<double>(regs.read(plant::kRegTank2Level).value_or(0)),
            };
            ds.features.v.insert(ds.features.v.end(), row, row + kNumFeatures);
            ds.labels.push_back(pkt.label);
            meta_.push_back({pkt.event_id, dec.checksum_mismatch, pkt.is_request});

            if (attack_write) {
                regs.write(pkt.reference, saved_reg);
                st = saved_state;
            }
            if (glitched) regs.write(pkt.reference, glitch_saved);
        }
        ds.features.rows = ds.labels.size();
        return ds;
    }

    static void apply_register_to_state(std::uint16_t reg, std::uint16_t v, plant::TankState& st) {
        switch (reg) {
            case plant::kRegPumpSpeed: st.pump_speed = static_cast<int>(v); break;
            case plant::kRegTank1Level: st.tank1_level = v; break;
            case plant::kRegTank2Level: st.tank2_level = v; break;
            case plant::kRegThresholdHighest: st.thresholds.highest = v; break;
            case plant::kRegThresholdLowest: st.thresholds.lowest = v; break;
            case plant::kRegThresholdHigh: st.thresholds.high = v; break;
            case plant::kRegThresholdLow: st.thresholds.low = v; break;
            default: break;
        }
    }
};

} // namespace omni::traffic
