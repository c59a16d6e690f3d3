#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "handtwin/hand_model.hpp"
#include "handtwin/kinematics.hpp"

namespace handtwin {

inline constexpr int kLandmarkCount = 21;
inline constexpr int kHumanAngles = 20;

/**
 * 21-point hand landmarks, MediaPipe order: 0 wrist; 1-4 thumb CMC, MCP,
 * IP, TIP; then MCP, PIP, DIP, TIP for index (5-8), middle (9-12),
 * ring (13-16) and little (17-20). Units are arbitrary.
 */
struct LandmarkFrame {
  double timestamp = 0.0;  // s
  std::array<Eigen::Vector3d, kLandmarkCount> points;
};

/// Human joint angles, four per finger in finger order (thumb first):
///   thumb:  CMC flex, CMC abd, MCP abd, MCP flex
///   others: MCP abd, MCP flex, PIP flex, DIP flex
/// Entries that cannot be computed from a degenerate frame are NaN.
using HumanAngles = Eigen::Matrix<double, kHumanAngles, 1>;

inline constexpr int human_index(FingerName f, int slot) { return 4 * static_cast<int>(f) + slot; }

/**
 * Joint angles from landmarks. Palm frame: origin at the wrist, x toward the
 * index MCP, palmar normal n = normalize((little MCP - wrist) x x). Each
 * finger's reference direction is its root landmark's direction from the
 * wrist, projected onto the palm plane. Abduction is the in-plane angle of
 * the first bone from that reference (positive away from the middle finger
 * for index/ring/little, radial for middle); flexion angles are signed
 * angles between consecutive bones. Scale invariant.
 */
HumanAngles landmarks_to_human_angles(const LandmarkFrame& frame);

/// Landmarks a hand in state `state` would produce (wrist at the palm origin).
LandmarkFrame landmarks_from_state(const HandModel& model, const JointState& state, double timestamp = 0.0);

struct AffineMap {
  double scale = 1.0;
  double offset = 0.0;
  double apply(double v) const { return scale * v + offset; }
};

struct RetargetConfig {
  double smoothing_alpha = 0.4;      // (0, 1]
  double max_joint_velocity = 8.0;   // rad/s
  double coupling_weight = 0.5;      // w in [0, 1]
  std::array<AffineMap, kHumanAngles> affine{};  // identity by default

  /// Throws ValidationError on an out-of-range field.
  void validate() const;
};

/**
 * Maps human angles to the 16 actuated joints. For each non-thumb finger the
 * robot PIP minimises (1-w)(pip - pip_h)^2 + w(coupling(pip) - dip_h)^2 over
 * the PIP range; other joints pass through the affine map. Outputs are
 * clamped; NaN inputs map to the clamped rest angle.
 */
ActuatedVector human_to_robot(const HandModel& model, const HumanAngles& human, const RetargetConfig& cfg);

/// Robot PIP choice for one finger; exposed for tests.
double select_coupled_driver(const AntiparallelogramLinkage& link, const Limits& driver_limits, double pip_h,
                             double dip_h, double weight);

struct StreamDiagnostics {
  std::size_t accepted = 0;
  std::size_t dropped_non_increasing = 0;
};

/// Causal EMA + per-joint velocity clamp over a timestamped actuated stream.
class StreamSmoother {
 public:
  explicit StreamSmoother(const RetargetConfig& cfg);

  /// Filtered output, or nullopt if the timestamp does not increase.
  std::optional<ActuatedVector> push(double timestamp, const ActuatedVector& q);

  const StreamDiagnostics& diagnostics() const noexcept { return diag_; }
  void reset();

 private:
  double alpha_;
  double max_velocity_;
  std::optional<double> last_time_;
  ActuatedVector state_ = ActuatedVector::Zero();
  StreamDiagnostics diag_;
};

struct TimedActuated {
  double timestamp = 0.0;
  ActuatedVector q = ActuatedVector::Zero();
};

/// Batch form of StreamSmoother; dropped frames are absent from the output.
std::vector<TimedActuated> smooth_stream(const std::vector<TimedActuated>& input, const RetargetConfig& cfg,
                                         StreamDiagnostics* diagnostics = nullptr);

/// Landmarks -> human angles -> robot joints -> smoothing, one frame at a time.
class Retargeter {
 public:
  Retargeter(const HandModel& model, RetargetConfig cfg);

  std::optional<ActuatedVector> process(const LandmarkFrame& frame);
  const StreamDiagnostics& diagnostics() const noexcept { return smoother_.diagnostics(); }
  const RetargetConfig& config() const noexcept { return cfg_; }

 private:
  const HandModel* model_;
  RetargetConfig cfg_;
  StreamSmoother smoother_;
};

/// One record per line: timestamp followed by 63 numbers (x y z per landmark),
/// separated by whitespace and/or commas. Blank lines and '#' comments skipped.
LandmarkFrame parse_landmark_record(const std::string& line);
std::vector<LandmarkFrame> load_landmark_stream(const std::string& path);
std::string format_landmark_record(const LandmarkFrame& frame);

}  // namespace handtwin
