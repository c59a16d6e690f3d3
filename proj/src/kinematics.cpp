#include "handtwin/kinematics.hpp"

#include <algorithm>
#include <cmath>

#include "handtwin/error.hpp"

namespace handtwin {

std::vector<Eigen::Vector3d> FingerFrames::skeleton_points(const RigidTransform& root) const {
  std::vector<Eigen::Vector3d> pts;
  pts.push_back(root.translation);
  for (std::size_t s = 1; s < segment_frames.size(); ++s) pts.push_back(segment_frames[s].translation);
  pts.push_back(tip());
  return pts;
}

FingerFrames finger_forward_kinematics(const FingerModel& finger, std::span<const double> angles) {
  if (angles.size() != finger.joints.size()) {
    throw ValidationError("state", "finger " + std::string(to_string(finger.name)) + " expects " +
                                       std::to_string(finger.joints.size()) + " joint angles");
  }
  FingerFrames out;
  out.segment_frames.reserve(finger.segments.size());
  out.joint_frames.reserve(finger.joints.size());

  RigidTransform t = finger.root;
  std::size_t j = 0;
  auto apply_joints_on = [&](const std::string& seg) {
    while (j < finger.joints.size() && finger.joints[j].parent_segment == seg) {
      out.joint_frames.push_back(t);
      t = t * RigidTransform::rotation_about(finger.joints[j].axis, angles[j]);
      ++j;
    }
  };

  apply_joints_on(kRootSegment);
  for (const auto& seg : finger.segments) {
    out.segment_frames.push_back(t);
    t = t * RigidTransform::translation_by(Eigen::Vector3d(seg.length, 0.0, 0.0));
    apply_joints_on(seg.id);
  }
  out.tip_frame = t;
  return out;
}

std::vector<double> finger_angles(const HandModel& model, const JointState& state, FingerName finger) {
  const auto& f = model.finger(finger);
  std::vector<double> a(f.joints.size());
  for (std::size_t j = 0; j < a.size(); ++j) {
    a[j] = state.full[model.full_index({static_cast<int>(finger), int(j)})];
  }
  return a;
}

FingertipSet forward_kinematics(const HandModel& model, const JointState& state) {
  FingertipSet set;
  for (FingerName f : kAllFingers) {
    const int fi = static_cast<int>(f);
    set.fingers[fi] = finger_forward_kinematics(model.finger(f), finger_angles(model, state, f));
    set.tips[fi] = set.fingers[fi].tip();
  }
  return set;
}

Eigen::Vector3d segment_point(const HandModel& model, const JointState& state, FingerName finger,
                              const std::string& segment, const Eigen::Vector3d& local_offset) {
  const auto& f = model.finger(finger);
  const int s = f.segment_index(segment);
  if (s < 0) return f.root * local_offset;
  const FingerFrames frames = finger_forward_kinematics(f, finger_angles(model, state, finger));
  return frames.segment_frames[s] * local_offset;
}

Eigen::MatrixXd fingertip_jacobian(const HandModel& model, const JointState& state, FingerName finger,
                                   bool fold_coupling) {
  const auto& f = model.finger(finger);
  const auto angles = finger_angles(model, state, finger);
  const FingerFrames frames = finger_forward_kinematics(f, angles);
  const Eigen::Vector3d tip = frames.tip();

  std::vector<Eigen::Vector3d> geometric(f.joints.size());
  for (std::size_t j = 0; j < f.joints.size(); ++j) {
    const auto& jf = frames.joint_frames[j];
    const Eigen::Vector3d axis = jf.rotation * f.joints[j].axis;
    geometric[j] = axis.cross(tip - jf.translation);
  }

  // Actuated joints in chain order map to columns.
  std::vector<int> column(f.joints.size(), -1);
  int n = 0;
  for (std::size_t j = 0; j < f.joints.size(); ++j) {
    if (f.joints[j].kind == JointKind::Actuated) column[j] = n++;
  }
  Eigen::MatrixXd jac(3, n);
  for (std::size_t j = 0; j < f.joints.size(); ++j) {
    if (column[j] >= 0) jac.col(column[j]) = geometric[j];
  }
  if (fold_coupling) {
    for (std::size_t j = 0; j < f.joints.size(); ++j) {
      const auto& js = f.joints[j];
      if (js.kind == JointKind::Actuated) continue;
      const JointRef drv = model.find_joint(js.driver);
      const double ratio = driven_angle_derivative(f, js, angles[drv.joint]);
      jac.col(column[drv.joint]) += ratio * geometric[j];
    }
  }
  return jac;
}

IkResult inverse_kinematics(const HandModel& model, FingerName finger, const Eigen::Vector3d& target,
                            const JointState& seed, const IkOptions& opts) {
  if (!target.allFinite()) throw DomainError("IK target has non-finite entries");
  const std::vector<int> channels = model.finger_channels(finger);

  auto tip_of = [&](const JointState& s) {
    return finger_forward_kinematics(model.finger(finger), finger_angles(model, s, finger)).tip();
  };

  IkResult res;
  JointState current = resolve_full_state(model, seed.actuated);
  double err = (target - tip_of(current)).norm();
  JointState best = current;
  double best_err = err;
  res.residual_history.push_back(err);
  if (opts.record_trace) res.trace.push_back(current);
  int kicks_left = 3;

  const int n = int(channels.size());
  // Damping starts at opts.damping, relaxes after each accepted step (down to
  // a floor) and stiffens on rejection, Levenberg-Marquardt style.
  const double lambda_floor = opts.damping * 1e-3;
  double lambda = opts.damping;
  for (res.iterations = 0; res.iterations < opts.max_iters && best_err > opts.tol; ++res.iterations) {
    const Eigen::Vector3d e = target - tip_of(current);
    const Eigen::MatrixXd jac = fingertip_jacobian(model, current, finger);

    bool accepted = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      // Joints pinned at a limit and pushed outward are dropped from the
      // Jacobian so the remaining joints take up the motion.
      Eigen::MatrixXd active = jac;
      Eigen::VectorXd dq;
      for (int pass = 0; pass <= n; ++pass) {
        const Eigen::Matrix3d damped = active * active.transpose() + lambda * lambda * Eigen::Matrix3d::Identity();
        dq = active.transpose() * damped.ldlt().solve(e);
        bool dropped = false;
        for (int c = 0; c < n; ++c) {
          const Limits& lim = model.channel_limits(channels[c]);
          const double v = current.actuated[channels[c]];
          if (active.col(c).isZero(0.0)) continue;
          if ((v <= lim.min && dq[c] < 0.0) || (v >= lim.max && dq[c] > 0.0)) {
            active.col(c).setZero();
            dropped = true;
          }
        }
        if (!dropped) break;
      }
      ActuatedVector q = current.actuated;
      for (int c = 0; c < n; ++c) q[channels[c]] += dq[c];
      JointState next = resolve_full_state(model, q);
      const double next_err = (target - tip_of(next)).norm();
      if (next_err < err) {
        current = std::move(next);
        err = next_err;
        accepted = true;
        lambda = std::max(lambda_floor, lambda / 3.0);
      } else {
        lambda *= 3.0;
      }
    }
    if (!accepted) {
      // Stationary point: out of reach, pinned by limits, or a straight
      // finger whose Jacobian cannot shorten it. Restart part-way toward
      // mid-range a few times; the best state so far is kept.
      if (kicks_left-- == 0) break;
      ActuatedVector q = current.actuated;
      for (int ch : channels) {
        const Limits& lim = model.channel_limits(ch);
        q[ch] += 0.3 * (0.5 * (lim.min + lim.max) - q[ch]);
      }
      current = resolve_full_state(model, q);
      err = (target - tip_of(current)).norm();
      lambda = opts.damping;
    }
    if (err < best_err) {
      best = current;
      best_err = err;
    }
    res.residual_history.push_back(best_err);
    if (opts.record_trace) res.trace.push_back(current);
  }
  res.state = best;
  res.residual = best_err;
  res.converged = best_err <= opts.tol;
  return res;
}

ForceResult max_fingertip_force(const HandModel& model, const JointState& state, FingerName finger,
                                const Eigen::Vector3d& direction) {
  if (!direction.allFinite() || std::abs(direction.norm() - 1.0) > 1e-9) {
    throw DomainError("force direction must be a unit vector");
  }
  const Eigen::MatrixXd jac = fingertip_jacobian(model, state, finger);
  const Eigen::VectorXd load = jac.transpose() * direction;  // joint torque per newton
  const std::vector<int> channels = model.finger_channels(finger);

  ForceResult out;
  for (int c = 0; c < int(channels.size()); ++c) {
    const double lever = std::abs(load[c]);
    if (lever <= kForceNullEpsilon) continue;
    const double tau = model.channel_spec(channels[c]).actuation->joint_torque_limit();
    const double f = tau / lever;
    if (!out.bounded || f < out.force) {
      out.force = f;
      out.bounded = true;
      out.limiting_channel = channels[c];
    }
  }
  return out;
}

}  // namespace handtwin
