#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

namespace omni::modbus {

// Function codes carried by the simulated frames. Only the codes the
// two-tank testbed actually exchanges are supported.
constexpr std::uint8_t kReadHoldingRegisters = 0x03;
constexpr std::uint8_t kWriteMultipleRegisters = 0x10;
constexpr std::uint8_t kExceptionBit = 0x80;

constexpr std::uint8_t kIllegalDataAddress = 0x02;
constexpr std::uint8_t kSlaveDeviceFailure = 0x04;

// CRC-16/MODBUS: reflected polynomial 0xA001, init 0xFFFF.
namespace detail {
constexpr std::array<std::uint16_t, 256> make_crc16_table() {
    std::array<std::uint16_t, 256> table{};
    for (std::uint16_t i = 0; i < 256; ++i) {
        std::uint16_t crc = i;
        for (int bit = 0; bit < 8; ++bit)
            crc = (crc & 1u) ? static_cast<std::uint16_t>((crc >> 1) ^ 0xA001u)
                             : static_cast<std::uint16_t>(crc >> 1);
        table[i] = crc;
    }
    return table;
}
inline constexpr auto kCrc16Table = make_crc16_table();
} // namespace detail

inline std::uint16_t crc16(std::span<const std::uint8_t> bytes) {
    std::uint16_t crc = 0xFFFF;
    for (std::uint8_t b : bytes)
        crc = static_cast<std::uint16_t>((crc >> 8) ^ detail::kCrc16Table[(crc ^ b) & 0xFFu]);
    return crc;
}

// One simulated Modbus/TCP frame. The MBAP length field and the checksum
// trailer are derived on encode and validated on decode, never stored.
struct ModbusTcpFrame {
    std::uint16_t transaction_id = 0;
    std::uint16_t protocol_id = 0;
    std::uint8_t unit_id = 0;
    std::uint8_t function_code = 0;
    std::uint16_t reference_number = 0;
    std::uint16_t register_count = 0;
    std::vector<std::uint16_t> data;
    std::optional<std::uint8_t> exception_code;

    bool is_exception() const { return exception_code.has_value(); }

    // Deduced from PDU shape: fc3 requests carry no data words, fc16
    // requests carry the values to write. Exceptions are responses.
    bool is_request() const {
        if (is_exception()) return false;
        if (function_code == kReadHoldingRegisters) return data.empty();
        if (function_code == kWriteMultipleRegisters) return !data.empty();
        return false;
    }

    bool operator==(const ModbusTcpFrame&) const = default;
};

struct MalformedFrame : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

enum class DecodeError {
    Truncated,
    BadProtocolId,
    LengthMismatch,
    UnknownFunction,
    MalformedPdu,
};

inline const char* to_string(DecodeError e) {
    switch (e) {
        case DecodeError::Truncated: return "truncated";
        case DecodeError::BadProtocolId: return "bad protocol id";
        case DecodeError::LengthMismatch: return "length mismatch";
        case DecodeError::UnknownFunction: return "unknown function";
        case DecodeError::MalformedPdu: return "malformed pdu";
    }
    return "?";
}

struct Decoded {
    ModbusTcpFrame frame;
    bool checksum_mismatch = false;
};

using DecodeResult = std::variant<Decoded, DecodeError>;

namespace detail {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
}

inline std::uint16_t get_u16(std::span<const std::uint8_t> in, std::size_t at) {
    return static_cast<std::uint16_t>((in[at] << 8) | in[at + 1]);
}

// Frame invariants; throws MalformedFrame describing the first violation.
inline void check_encodable(const ModbusTcpFrame& f) {
    if (f.protocol_id != 0)
        throw MalformedFrame("protocol_id must be 0");
    if (f.is_exception()) {
        if (!(f.function_code & kExceptionBit))
            throw MalformedFrame("exception frame requires high bit in function code");
        if (!f.data.empty())
            throw MalformedFrame("exception frame must carry no data");
        const std::uint8_t base = f.function_code & ~kExceptionBit;
        if (base != kReadHoldingRegisters && base != kWriteMultipleRegisters)
            throw MalformedFrame("unsupported base function in exception frame");
        if (f.reference_number != 0 || f.register_count != 0)
            throw MalformedFrame("exception frame must have zero reference/count");
        return;
    }
    if (f.function_code & kExceptionBit)
        throw MalformedFrame("exception bit set without exception code");
    if (f.function_code == kReadHoldingRegisters) {
        if (f.data.empty()) { // request
            if (f.register_count < 1 || f.register_count > 125)
                throw MalformedFrame("read request count out of range");
        } else { // response
            if (f.reference_number != 0 || f.register_count != f.data.size() || f.data.size() > 125)
                throw MalformedFrame("read response shape invalid");
        }
    } else if (f.function_code == kWriteMultipleRegisters) {
        if (f.data.empty()) { // response echo
            if (f.register_count < 1 || f.register_count > 123)
                throw MalformedFrame("write response count out of range");
        } else { // request
            if (f.register_count != f.data.size() || f.data.size() > 123)
                throw MalformedFrame("write request count/data mismatch");
        }
    } else {
        throw MalformedFrame("unsupported function code");
    }
}

} // namespace detail

// Byte layout: 7-byte big-endian MBAP header (transaction, protocol, length,
// unit), PDU per the Modbus spec for fc 3 / fc 16 / exceptions, then a
// 2-byte big-endian CRC-16/MODBUS trailer over header+PDU.
inline std::vector<std::uint8_t> encode(const ModbusTcpFrame& f) {
    detail::check_encodable(f);

    std::vector<std::uint8_t> pdu;
    pdu.push_back(f.function_code);
    if (f.is_exception()) {
        pdu.push_back(*f.exception_code);
    } else if (f.function_code == kReadHoldingRegisters) {
        if (f.data.empty()) {
            detail::put_u16(pdu, f.reference_number);
            detail::put_u16(pdu, f.register_count);
        } else {
            pdu.push_back(static_cast<std::uint8_t>(2 * f.data.size()));
            for (std::uint16_t w : f.data) detail::put_u16(pdu, w);
        }
    } else { // write multiple
        detail::put_u16(pdu, f.reference_number);
        detail::put_u16(pdu, f.register_count);
        if (!f.data.empty()) {
            pdu.push_back(static_cast<std::uint8_t>(2 * f.data.size()));
            for (std::uint16_t w : f.data) detail::put_u16(pdu, w);
        }
    }

    std::vector<std::uint8_t> out;
    out.reserve(7 + pdu.size() + 2);
    detail::put_u16(out, f.transaction_id);
    detail::put_u16(out, f.protocol_id);
    detail::put_u16(out, static_cast<std::uint16_t>(1 + pdu.size())); // unit + PDU
    out.push_back(f.unit_id);
    out.insert(out.end(), pdu.begin(), pdu.end());
    detail::put_u16(out, crc16(out));
    return out;
}

// Inverse of encode on valid inputs. A checksum mismatch is flagged but the
// frame is still returned so a passive tap can observe CRC-attack packets.
inline DecodeResult decode(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 7) return DecodeError::Truncated;
    ModbusTcpFrame f;
    f.transaction_id = detail::get_u16(bytes, 0);
    f.protocol_id = detail::get_u16(bytes, 2);
    if (f.protocol_id != 0) return DecodeError::BadProtocolId;
    const std::uint16_t length = detail::get_u16(bytes, 4);
    if (length < 2) return DecodeError::LengthMismatch;
    const std::size_t expected = 6 + static_cast<std::size_t>(length) + 2;
    if (bytes.size() < expected) return DecodeError::Truncated;
    if (bytes.size() > expected) return DecodeError::LengthMismatch;
    f.unit_id = bytes[6];
    f.function_code = bytes[7];

    const std::span<const std::uint8_t> body = bytes.subspan(8, length - 2);
    if (f.function_code & kExceptionBit) {
        const std::uint8_t base = f.function_code & ~kExceptionBit;
        if (base != kReadHoldingRegisters && base != kWriteMultipleRegisters)
            return DecodeError::UnknownFunction;
        if (body.size() != 1) return DecodeError::MalformedPdu;
        f.exception_code = body[0];
    } else if (f.function_code == kReadHoldingRegisters) {
        if (body.size() == 4) { // request
            f.reference_number = detail::get_u16(body, 0);
            f.register_count = detail::get_u16(body, 2);
            if (f.register_count < 1 || f.register_count > 125)
                return DecodeError::MalformedPdu;
        } else if (!body.empty() && body.size() == 1u + body[0] && body[0] % 2 == 0 && body[0] >= 2) {
            const std::size_t n = body[0] / 2;
            if (n > 125) return DecodeError::MalformedPdu;
            f.register_count = static_cast<std::uint16_t>(n);
            for (std::size_t i = 0; i < n; ++i)
                f.data.push_back(detail::get_u16(body, 1 + 2 * i));
        } else {
            return DecodeError::MalformedPdu;
        }
    } else if (f.function_code == kWriteMultipleRegisters) {
        if (body.size() == 4) { // response echo
            f.reference_number = detail::get_u16(body, 0);
            f.register_count = detail::get_u16(body, 2);
            if (f.register_count < 1 || f.register_count > 123)
                return DecodeError::MalformedPdu;
        } else if (body.size() >= 7 && body.size() == 5u + body[4] && body[4] % 2 == 0) {
            f.reference_number = detail::get_u16(body, 0);
            f.register_count = detail::get_u16(body, 2);
            const std::size_t n = body[4] / 2;
            if (f.register_count != n || n > 123) return DecodeError::MalformedPdu;
            for (std::size_t i = 0; i < n; ++i)
                f.data.push_back(detail::get_u16(body, 5 + 2 * i));
        } else {
            return DecodeError::MalformedPdu;
        }
    } else {
        return DecodeError::UnknownFunction;
    }

    const std::uint16_t stored = detail::get_u16(bytes, expected - 2);
    const std::uint16_t computed = crc16(bytes.subspan(0, expected - 2));
    return Decoded{std::move(f), stored != computed};
}

} // namespace omni::modbus
