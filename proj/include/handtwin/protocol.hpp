#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "handtwin/hand_model.hpp"

namespace handtwin::protocol {

// Frame: AA 55 | type | payload | CRC-16/CCITT-FALSE over type+payload (little-endian)
inline constexpr std::uint8_t kHeader0 = 0xAA;
inline constexpr std::uint8_t kHeader1 = 0x55;
inline constexpr std::uint8_t kTypeJointCommand = 0x01;
inline constexpr std::uint8_t kTypeStatusRequest = 0x02;
inline constexpr std::size_t kJointPayloadBytes = 2 * kActuatedJoints;
inline constexpr std::size_t kJointFrameBytes = 2 + 1 + kJointPayloadBytes + 2;  // 37
inline constexpr std::size_t kStatusFrameBytes = 2 + 1 + 2;                      // 5
inline constexpr std::uint16_t kMaxTick = 4095;

using Bytes = std::vector<std::uint8_t>;
using Ticks = std::array<std::uint16_t, kActuatedJoints>;

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data, std::uint16_t crc = 0xFFFF);

/// Angle <-> 12-bit tick over the joint's [min, max]; angles are clamped first.
std::uint16_t angle_to_tick(double angle, const Limits& limits);
double tick_to_angle(std::uint16_t tick, const Limits& limits);
/// Angular size of one tick for a joint: range / 4095.
inline double tick_quantum(const Limits& limits) { return limits.span() / kMaxTick; }

Ticks to_ticks(const HandModel& model, const ActuatedVector& actuated);
ActuatedVector from_ticks(const HandModel& model, const Ticks& ticks);

/// 37-byte joint command. Slot c of the payload carries channel c.
Bytes encode_frame(const HandModel& model, const ActuatedVector& actuated);
Bytes encode_ticks(const Ticks& ticks);
Bytes encode_status_request();

struct JointCommand {
  Ticks ticks{};
};
struct StatusRequest {};
using Frame = std::variant<JointCommand, StatusRequest>;

struct DecoderStats {
  std::size_t frames = 0;
  std::size_t crc_errors = 0;
  std::size_t unknown_types = 0;
  std::size_t resyncs = 0;          // runs of bytes skipped while hunting for a header
  std::size_t discarded_bytes = 0;
};

/**
 * Incremental decoder for an arbitrary byte stream. Scans for the header,
 * validates the CRC and emits frames in order. A rejected candidate frame
 * costs only its first header byte, so a real header inside it is still
 * found. Incomplete tails stay buffered until more bytes arrive.
 */
class FrameDecoder {
 public:
  std::vector<Frame> feed(std::span<const std::uint8_t> bytes);
  const DecoderStats& stats() const noexcept { return stats_; }
  std::size_t buffered() const noexcept { return buffer_.size(); }

 private:
  void skip(std::size_t n);

  Bytes buffer_;
  DecoderStats stats_;
  bool skipping_ = false;
};

struct DecodeResult {
  std::vector<ActuatedVector> commands;
  std::size_t status_requests = 0;
  DecoderStats stats;
  std::size_t buffered_tail = 0;
};

/// One-shot decode of a byte string into joint vectors plus diagnostics.
DecodeResult decode_frame(const HandModel& model, std::span<const std::uint8_t> bytes);

}  // namespace handtwin::protocol
