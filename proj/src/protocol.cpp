#include "handtwin/protocol.hpp"

#include <algorithm>
#include <cmath>

namespace handtwin::protocol {

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data, std::uint16_t crc) {
  for (std::uint8_t byte : data) {
    crc ^= static_cast<std::uint16_t>(byte) << 8;
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021) : static_cast<std::uint16_t>(crc << 1);
    }
  }
  return crc;
}

std::uint16_t angle_to_tick(double angle, const Limits& limits) {
  const double u = (limits.clamp(angle) - limits.min) / limits.span();
  const long t = std::lround(u * kMaxTick);
  return static_cast<std::uint16_t>(std::clamp<long>(t, 0, kMaxTick));
}

double tick_to_angle(std::uint16_t tick, const Limits& limits) {
  if (tick >= kMaxTick) return limits.max;
  return limits.min + limits.span() * (double(tick) / kMaxTick);
}

Ticks to_ticks(const HandModel& model, const ActuatedVector& actuated) {
  Ticks t{};
  for (int c = 0; c < kActuatedJoints; ++c) t[c] = angle_to_tick(actuated[c], model.channel_limits(c));
  return t;
}

ActuatedVector from_ticks(const HandModel& model, const Ticks& ticks) {
  ActuatedVector q;
  for (int c = 0; c < kActuatedJoints; ++c) q[c] = tick_to_angle(ticks[c], model.channel_limits(c));
  return q;
}

Bytes encode_ticks(const Ticks& ticks) {
  Bytes out;
  out.reserve(kJointFrameBytes);
  out.push_back(kHeader0);
  out.push_back(kHeader1);
  out.push_back(kTypeJointCommand);
  for (std::uint16_t t : ticks) {
    out.push_back(static_cast<std::uint8_t>(t & 0xFF));
    out.push_back(static_cast<std::uint8_t>(t >> 8));
  }
  const std::uint16_t crc = crc16_ccitt_false(std::span(out).subspan(2));
  out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
  return out;
}

Bytes encode_frame(const HandModel& model, const ActuatedVector& actuated) {
  return encode_ticks(to_ticks(model, actuated));
}

Bytes encode_status_request() {
  Bytes out = {kHeader0, kHeader1, kTypeStatusRequest};
  const std::uint16_t crc = crc16_ccitt_false(std::span(out).subspan(2));
  out.push_back(static_cast<std::uint8_t>(crc & 0xFF));
  out.push_back(static_cast<std::uint8_t>(crc >> 8));
  return out;
}

void FrameDecoder::skip(std::size_t n) {
  if (!skipping_) ++stats_.resyncs;
  skipping_ = true;
  stats_.discarded_bytes += n;
  buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(n));
}

std::vector<Frame> FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  std::vector<Frame> out;
  while (!buffer_.empty()) {
    if (buffer_[0] != kHeader0) {
      std::size_t n = 1;
      while (n < buffer_.size() && buffer_[n] != kHeader0) ++n;
      skip(n);
      continue;
    }
    if (buffer_.size() < 2) break;
    if (buffer_[1] != kHeader1) {
      skip(1);
      continue;
    }
    if (buffer_.size() < 3) break;
    const std::uint8_t type = buffer_[2];
    std::size_t length = 0;
    if (type == kTypeJointCommand) {
      length = kJointFrameBytes;
    } else if (type == kTypeStatusRequest) {
      length = kStatusFrameBytes;
    } else {
      ++stats_.unknown_types;
      skip(1);
      continue;
    }
    if (buffer_.size() < length) break;

    const auto body = std::span<const std::uint8_t>(buffer_).subspan(2, length - 4);
    const std::uint16_t expected = crc16_ccitt_false(body);
    const std::uint16_t got = static_cast<std::uint16_t>(buffer_[length - 2] | (buffer_[length - 1] << 8));
    if (expected != got) {
      ++stats_.crc_errors;
      skip(1);
      continue;
    }
    if (type == kTypeJointCommand) {
      JointCommand cmd;
      for (int c = 0; c < kActuatedJoints; ++c) {
        cmd.ticks[c] = static_cast<std::uint16_t>(buffer_[3 + 2 * c] | (buffer_[4 + 2 * c] << 8));
      }
      out.emplace_back(cmd);
    } else {
      out.emplace_back(StatusRequest{});
    }
    ++stats_.frames;
    skipping_ = false;
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(length));
  }
  return out;
}

DecodeResult decode_frame(const HandModel& model, std::span<const std::uint8_t> bytes) {
  FrameDecoder decoder;
  DecodeResult res;
  for (const Frame& f : decoder.feed(bytes)) {
    if (const auto* cmd = std::get_if<JointCommand>(&f)) {
      res.commands.push_back(from_ticks(model, cmd->ticks));
    } else {
      ++res.status_requests;
    }
  }
  res.stats = decoder.stats();
  res.buffered_tail = decoder.buffered();
  return res;
}

}  // namespace handtwin::protocol
