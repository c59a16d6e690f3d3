#include "handtwin/control.hpp"

#include <algorithm>
#include <cmath>

#include "handtwin/error.hpp"

namespace handtwin::control {

double smoothstep(double u) {
  u = std::clamp(u, 0.0, 1.0);
  return u * u * (3.0 - 2.0 * u);
}

double Trajectory::progress(double clock) const { return smoothstep((clock - start_time) / duration); }

ActuatedVector Trajectory::sample(double clock) const {
  const double s = progress(clock);
  if (s <= 0.0) return start;
  if (s >= 1.0) return end;
  return start + s * (end - start);
}

const char* mode_name(const ControlMode& mode) {
  switch (mode.index()) {
    case 0: return "JointLevel";
    case 1: return "TaskBased";
    default: return "Shadow";
  }
}

ActuatedVector step_control_loop(const ControlMode& mode, double clock, const ActuatedVector& current) {
  if (const auto* jl = std::get_if<JointLevel>(&mode)) return jl->target;
  if (const auto* tb = std::get_if<TaskBased>(&mode)) return tb->trajectory.sample(clock);
  const auto& sh = std::get<Shadow>(mode);
  return sh.latest ? *sh.latest : current;
}

void ControlConfig::validate() const {
  if (!(period > 0.0)) throw ValidationError("period", "must be > 0");
  if (!(max_velocity > 0.0)) throw ValidationError("max_velocity", "must be > 0");
  if (!(broadcast_rate > 0.0)) throw ValidationError("broadcast_rate", "must be > 0");
}

LoopbackDevice::LoopbackDevice(const HandModel& model, double lag_time_constant)
    : model_(&model), lag_(lag_time_constant) {
  if (!(lag_ >= 0.0)) throw ValidationError("lag_time_constant", "must be >= 0");
  target_ = model.clamp(ActuatedVector::Zero());
  state_ = target_;
}

void LoopbackDevice::send(std::span<const std::uint8_t> frame) {
  for (const auto& f : decoder_.feed(frame)) {
    if (const auto* cmd = std::get_if<protocol::JointCommand>(&f)) {
      pending_ = protocol::from_ticks(*model_, cmd->ticks);
    } else {
      ++status_requests_;
    }
  }
}

void LoopbackDevice::advance(double dt) {
  if (pending_) {
    target_ = *pending_;
    pending_.reset();
  }
  if (lag_ <= 0.0) {
    state_ = target_;
  } else {
    state_ += (1.0 - std::exp(-dt / lag_)) * (target_ - state_);
  }
}

HandController::HandController(const HandModel& model, ControlConfig cfg, RetargetConfig retarget_cfg,
                               std::unique_ptr<Device> device)
    : model_(&model),
      cfg_(cfg),
      device_(std::move(device)),
      retargeter_(model, std::move(retarget_cfg)) {
  cfg_.validate();
  if (!device_) throw ValidationError("device", "controller needs a device");
  command_ = device_->state();
  mode_ = JointLevel{command_};
}

void HandController::set_joint(int channel, double rad) {
  if (channel < 0 || channel >= kActuatedJoints) throw ValidationError("channel", "outside 0..15");
  if (!std::isfinite(rad)) throw DomainError("joint target must be finite");
  if (auto* jl = std::get_if<JointLevel>(&mode_)) {
    jl->target[channel] = rad;
    return;
  }
  JointLevel next{command_};
  next.target[channel] = rad;
  mode_ = next;
}

void HandController::set_joint_targets(const ActuatedVector& targets) {
  if (!targets.allFinite()) throw DomainError("joint targets must be finite");
  mode_ = JointLevel{targets};
}

void HandController::start_task(const ActuatedVector& goal, double duration, int grasp_id) {
  if (!goal.allFinite()) throw DomainError("task goal must be finite");
  if (!(duration > 0.0) || !std::isfinite(duration)) throw ValidationError("duration", "must be > 0");
  Trajectory traj{command_, model_->clamp(goal), clock_, duration};
  mode_ = TaskBased{traj, grasp_id};
}

void HandController::enter_shadow() {
  if (!std::holds_alternative<Shadow>(mode_)) mode_ = Shadow{};
}

void HandController::push_landmarks(const LandmarkFrame& frame) {
  ++diag_.landmarks_received;
  if (pending_landmarks_) ++diag_.landmarks_superseded;
  pending_landmarks_ = frame;
}

void HandController::step() {
  ++diag_.steps;
  clock_ += cfg_.period;

  bool fresh = false;
  if (pending_landmarks_) {
    try {
      if (auto q = retargeter_.process(*pending_landmarks_)) {
        if (auto* sh = std::get_if<Shadow>(&mode_)) sh->latest = *q;
        fresh = true;
      } else {
        ++diag_.landmarks_rejected;
      }
    } catch (const HandError&) {
      ++diag_.landmarks_rejected;
    }
    pending_landmarks_.reset();
  }
  if (std::holds_alternative<Shadow>(mode_) && !fresh) ++diag_.shadow_starved_steps;

  const ActuatedVector requested = step_control_loop(mode_, clock_, command_);
  const double max_step = cfg_.max_velocity * cfg_.period;
  for (int c = 0; c < kActuatedJoints; ++c) {
    const Limits& lim = model_->channel_limits(c);
    const double wanted = lim.clamp(requested[c]);
    limits_hit_[c] = requested[c] < lim.min || requested[c] > lim.max;
    command_[c] = command_[c] + std::clamp(wanted - command_[c], -max_step, max_step);
  }

  device_->send(protocol::encode_frame(*model_, command_));
  device_->advance(cfg_.period);
}

StateSnapshot HandController::snapshot() const {
  StateSnapshot s;
  s.time = clock_;
  s.mode = mode_name(mode_);
  s.command = command_;
  s.state = resolve_full_state(*model_, device_->state());
  s.fk = forward_kinematics(*model_, s.state);
  s.limits_hit = limits_hit_;
  if (const auto* tb = std::get_if<TaskBased>(&mode_)) {
    s.task_progress = tb->trajectory.progress(clock_);
    s.grasp_id = tb->grasp_id;
  }
  return s;
}

}  // namespace handtwin::control
