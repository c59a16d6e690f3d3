#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "handtwin/hand_model.hpp"
#include "handtwin/kinematics.hpp"
#include "handtwin/protocol.hpp"
#include "handtwin/retarget.hpp"

namespace handtwin::control {

/// 3u^2 - 2u^3 with u clamped to [0, 1].
double smoothstep(double u);

struct Trajectory {
  ActuatedVector start = ActuatedVector::Zero();
  ActuatedVector end = ActuatedVector::Zero();
  double start_time = 0.0;  // s, controller clock
  double duration = 1.0;    // s, > 0

  ActuatedVector sample(double clock) const;
  double progress(double clock) const;  // smoothstep value in [0, 1]
};

struct JointLevel {
  ActuatedVector target = ActuatedVector::Zero();
};
struct TaskBased {
  Trajectory trajectory;
  int grasp_id = -1;  // -1 when the goal was given explicitly
};
struct Shadow {
  std::optional<ActuatedVector> latest;  // most recent smoothed retarget output
};
using ControlMode = std::variant<JointLevel, TaskBased, Shadow>;

const char* mode_name(const ControlMode& mode);

/// Unfiltered target of a mode: held target, trajectory sample, or latest
/// shadow output (falling back to `current` when none has arrived).
ActuatedVector step_control_loop(const ControlMode& mode, double clock, const ActuatedVector& current);

struct ControlConfig {
  double period = 0.02;           // s
  double max_velocity = 10.0;     // rad/s, per joint, applied to every mode
  double broadcast_rate = 30.0;   // Hz, upper bound for state broadcasts

  void validate() const;
};

/// Anything that accepts protocol frames and reports joint state.
class Device {
 public:
  virtual ~Device() = default;
  virtual void send(std::span<const std::uint8_t> frame) = 0;
  /// Advance device time by dt seconds.
  virtual void advance(double dt) = 0;
  virtual ActuatedVector state() const = 0;
  virtual std::string describe() const = 0;
};

/**
 * Simulated microcontroller. Decodes frames with the real protocol decoder;
 * a command received during one period becomes the target at the next
 * advance. With lag_time_constant > 0 the joints follow the target through a
 * first-order lag, otherwise they jump to it.
 */
class LoopbackDevice : public Device {
 public:
  explicit LoopbackDevice(const HandModel& model, double lag_time_constant = 0.0);

  void send(std::span<const std::uint8_t> frame) override;
  void advance(double dt) override;
  ActuatedVector state() const override { return state_; }
  std::string describe() const override { return "loopback"; }

  const protocol::DecoderStats& decoder_stats() const { return decoder_.stats(); }
  std::size_t status_requests() const { return status_requests_; }

 private:
  const HandModel* model_;
  double lag_;
  protocol::FrameDecoder decoder_;
  std::optional<ActuatedVector> pending_;
  ActuatedVector target_;
  ActuatedVector state_;
  std::size_t status_requests_ = 0;
};

struct ControlDiagnostics {
  std::size_t steps = 0;
  std::size_t shadow_starved_steps = 0;  // shadow steps with no new landmark frame
  std::size_t landmarks_received = 0;
  std::size_t landmarks_superseded = 0;  // latest-wins overwrites before processing
  std::size_t landmarks_rejected = 0;    // non-increasing timestamps or bad frames
};

struct StateSnapshot {
  double time = 0.0;
  std::string mode;
  ActuatedVector command = ActuatedVector::Zero();  // last target sent
  JointState state;                                 // device-reported, coupled joints resolved
  FingertipSet fk;
  std::array<bool, kActuatedJoints> limits_hit{};
  double task_progress = 0.0;  // TaskBased only
  int grasp_id = -1;
};

/**
 * Single-writer control loop: owns the mode, the device and the shadow
 * pipeline. Everything is driven by step(); the controller clock advances by
 * one period per step, so a message sequence maps to a deterministic output
 * sequence.
 */
class HandController {
 public:
  HandController(const HandModel& model, ControlConfig cfg, RetargetConfig retarget_cfg,
                 std::unique_ptr<Device> device);

  /// Joint-level control of one channel; other joints hold their current command.
  void set_joint(int channel, double rad);
  void set_joint_targets(const ActuatedVector& targets);
  /// Task-based move from the current command to `goal` over `duration` seconds.
  void start_task(const ActuatedVector& goal, double duration, int grasp_id = -1);
  void enter_shadow();
  /// Latest-wins: a frame not yet consumed by step() is replaced.
  void push_landmarks(const LandmarkFrame& frame);

  void step();

  double clock() const noexcept { return clock_; }
  const ControlMode& mode() const noexcept { return mode_; }
  const ActuatedVector& command() const noexcept { return command_; }
  const ControlDiagnostics& diagnostics() const noexcept { return diag_; }
  const ControlConfig& config() const noexcept { return cfg_; }
  const HandModel& model() const noexcept { return *model_; }
  Device& device() noexcept { return *device_; }
  StateSnapshot snapshot() const;

 private:
  const HandModel* model_;
  ControlConfig cfg_;
  std::unique_ptr<Device> device_;
  Retargeter retargeter_;
  ControlMode mode_;
  ActuatedVector command_;
  std::array<bool, kActuatedJoints> limits_hit_{};
  std::optional<LandmarkFrame> pending_landmarks_;
  double clock_ = 0.0;
  ControlDiagnostics diag_;
};

}  // namespace handtwin::control
