#pragma once

#include <array>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "handtwin/hand_model.hpp"
#include "handtwin/transform.hpp"

namespace handtwin {

/// Frames of one finger chain in the palm frame.
struct FingerFrames {
  std::vector<RigidTransform> segment_frames;  // base of each segment, after the joints at its base
  std::vector<RigidTransform> joint_frames;    // each joint's frame before its own rotation
  RigidTransform tip_frame;

  Eigen::Vector3d tip() const { return tip_frame.translation; }
  /// Root, the end of every segment, and the tip: segments + 1 points.
  std::vector<Eigen::Vector3d> skeleton_points(const RigidTransform& root) const;
};

struct FingertipSet {
  std::array<Eigen::Vector3d, kFingers> tips;
  std::array<FingerFrames, kFingers> fingers;

  const Eigen::Vector3d& tip(FingerName f) const { return tips[static_cast<int>(f)]; }
};

/// Chain of one finger for its full-joint angles (root to tip order).
FingerFrames finger_forward_kinematics(const FingerModel& finger, std::span<const double> joint_angles);

FingertipSet forward_kinematics(const HandModel& model, const JointState& state);

/// Point given in a segment's local frame ("root" allowed), expressed in the palm frame.
Eigen::Vector3d segment_point(const HandModel& model, const JointState& state, FingerName finger,
                              const std::string& segment, const Eigen::Vector3d& local_offset);

/// Per-finger slice of the full state.
std::vector<double> finger_angles(const HandModel& model, const JointState& state, FingerName finger);

/**
 * d tip / d actuated for one finger, 3 x n with n the finger's actuated joints
 * in root-to-tip order. Driven joints are folded into their driver's column
 * through the coupling derivative unless `fold_coupling` is false.
 */
Eigen::MatrixXd fingertip_jacobian(const HandModel& model, const JointState& state, FingerName finger,
                                   bool fold_coupling = true);

struct IkOptions {
  double damping = 0.05;  // lambda
  int max_iters = 200;
  double tol = 1e-5;  // m
  bool record_trace = false;
};

struct IkResult {
  JointState state;  // best state found
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;  // |tip - target|, m
  std::vector<double> residual_history;  // best residual after each iteration, non-increasing
  std::vector<JointState> trace;         // iterates when IkOptions::record_trace
};

/**
 * Damped least-squares position IK for one fingertip. Only the finger's
 * actuated joints move; every iterate is projected onto the joint limits and
 * coupled joints are re-derived from their drivers. A step that would raise
 * the residual is retried with heavier damping; damping relaxes again after
 * accepted steps. Joints pinned at a limit drop out of the step. When no
 * step helps, up to three restarts pull the joints toward mid-range. The
 * best state found is returned. Throws DomainError for a non-finite target.
 */
IkResult inverse_kinematics(const HandModel& model, FingerName finger, const Eigen::Vector3d& target,
                            const JointState& seed, const IkOptions& opts = {});

struct ForceResult {
  double force = std::numeric_limits<double>::infinity();  // N
  bool bounded = false;  // false when `direction` loads no joint
  int limiting_channel = -1;
};

inline constexpr double kForceNullEpsilon = 1e-9;

/**
 * Largest fingertip force along `direction` (unit) whose joint torques
 * tau = J^T f stay within each joint's tendon torque limit.
 */
ForceResult max_fingertip_force(const HandModel& model, const JointState& state, FingerName finger,
                                const Eigen::Vector3d& direction);

}  // namespace handtwin
