#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "handtwin/linkage.hpp"
#include "handtwin/transform.hpp"

namespace handtwin {

inline constexpr int kActuatedJoints = 16;
inline constexpr int kCoupledJoints = 5;
inline constexpr int kTotalJoints = kActuatedJoints + kCoupledJoints;
inline constexpr int kFingers = 5;
inline constexpr int kFormatVersion = 1;

using ActuatedVector = Eigen::Matrix<double, kActuatedJoints, 1>;
using FullVector = Eigen::Matrix<double, kTotalJoints, 1>;

enum class FingerName { Thumb = 0, Index, Middle, Ring, Little };

const char* to_string(FingerName f);
FingerName finger_from_string(const std::string& s);
inline constexpr std::array<FingerName, kFingers> kAllFingers = {
    FingerName::Thumb, FingerName::Index, FingerName::Middle, FingerName::Ring, FingerName::Little};

enum class JointKind { Actuated, Coupled, FixedRatio };

struct Limits {
  double min = 0.0;
  double max = 0.0;

  double clamp(double v) const { return v < min ? min : (v > max ? max : v); }
  bool contains(double v) const { return v >= min && v <= max; }
  double span() const { return max - min; }
  bool operator==(const Limits&) const = default;
};

/// Tendon drive of one actuated joint (N-configuration, one servo per joint).
struct Actuation {
  double joint_pulley_radius = 0.0;  // m
  double servo_pulley_radius = 0.0;  // m
  double servo_torque_limit = 0.0;   // N·m

  /// Torque available at the joint through the pulley ratio.
  double joint_torque_limit() const { return servo_torque_limit * joint_pulley_radius / servo_pulley_radius; }
  bool operator==(const Actuation&) const = default;
};

struct JointSpec {
  std::string id;
  JointKind kind = JointKind::Actuated;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // unit, in the parent frame
  Limits limits;
  std::string parent_segment;  // "root" or a segment id of the same finger
  std::string driver;          // coupled / fixed-ratio: driving actuated joint id
  double ratio = 1.0;          // fixed-ratio only
  std::optional<Actuation> actuation;  // actuated only

  bool operator==(const JointSpec&) const = default;
};

struct Segment {
  std::string id;
  double length = 0.0;  // m
  bool operator==(const Segment&) const = default;
};

inline constexpr const char* kRootSegment = "root";

/**
 * One finger. Joint order is fixed by finger type:
 *   thumb:  CMC flex, CMC abd, MCP abd, MCP flex, IP (driven by MCP flex)
 *   others: MCP abd, MCP flex, PIP flex, DIP (driven by PIP flex)
 * Joints hang off `parent_segment`: "root" joints act at the finger root,
 * joints on segment s act at the distal end of s.
 */
struct FingerModel {
  FingerName name = FingerName::Index;
  RigidTransform root;  // finger root in the palm frame
  std::vector<Segment> segments;
  std::vector<JointSpec> joints;
  std::optional<AntiparallelogramLinkage> coupling;

  int segment_index(const std::string& id) const;  // -1 for root, throws if unknown
  double total_length() const;
  bool operator==(const FingerModel&) const = default;
};

/// Index of a joint in the model.
struct JointRef {
  int finger = 0;  // FingerName as int
  int joint = 0;   // index in FingerModel::joints
};

/**
 * Validated, immutable hand description: 16 actuated and 5 coupled joints.
 * Actuated vectors are ordered by wire_map channel; full vectors by finger
 * (thumb, index, middle, ring, little) then joint order root to tip.
 */
class HandModel {
 public:
  /// Validates every invariant; throws ValidationError naming the field.
  HandModel(std::string name, std::array<FingerModel, kFingers> fingers,
            std::map<std::string, int> wire_map);

  const std::string& name() const noexcept { return name_; }
  const FingerModel& finger(FingerName f) const { return fingers_[static_cast<int>(f)]; }
  const std::array<FingerModel, kFingers>& fingers() const noexcept { return fingers_; }
  const std::map<std::string, int>& wire_map() const noexcept { return wire_map_; }

  const JointSpec& joint(JointRef r) const { return fingers_[r.finger].joints[r.joint]; }
  JointRef channel_joint(int channel) const { return channel_joint_.at(channel); }
  const JointSpec& channel_spec(int channel) const { return joint(channel_joint(channel)); }
  const Limits& channel_limits(int channel) const { return channel_spec(channel).limits; }
  int channel_of(const std::string& joint_id) const;
  /// Channel of an actuated joint, -1 for driven joints.
  int channel_of(JointRef r) const { return joint_channel_[r.finger][r.joint]; }
  int full_index(JointRef r) const { return full_offset_[r.finger] + r.joint; }
  JointRef full_joint(int full_index) const;
  JointRef find_joint(const std::string& joint_id) const;

  /// Channels of the finger's actuated joints in root-to-tip order.
  std::vector<int> finger_channels(FingerName f) const;

  ActuatedVector lower_limits() const;
  ActuatedVector upper_limits() const;
  ActuatedVector clamp(const ActuatedVector& q) const;

  bool operator==(const HandModel& o) const {
    return name_ == o.name_ && fingers_ == o.fingers_ && wire_map_ == o.wire_map_;
  }

 private:
  std::string name_;
  std::array<FingerModel, kFingers> fingers_;
  std::map<std::string, int> wire_map_;

  std::array<JointRef, kActuatedJoints> channel_joint_{};
  std::array<std::vector<int>, kFingers> joint_channel_{};
  std::array<int, kFingers> full_offset_{};
};

struct JointState {
  ActuatedVector actuated = ActuatedVector::Zero();
  FullVector full = FullVector::Zero();
};

/// Driven-joint angle from its driver's angle.
double driven_angle(const FingerModel& finger, const JointSpec& driven, double driver_angle);
double driven_angle_derivative(const FingerModel& finger, const JointSpec& driven, double driver_angle);

/**
 * Clamps actuated angles to their limits, then derives every coupled joint
 * from its driver. Throws DomainError on non-finite input.
 */
JointState resolve_full_state(const HandModel& model, const ActuatedVector& actuated);

struct LimitViolation {
  int channel = 0;
  std::string joint_id;
  double value = 0.0;
  Limits limits;
};

/// Strict limit check without clamping. Non-finite values count as violations.
std::vector<LimitViolation> check_limits(const HandModel& model, const ActuatedVector& actuated);

HandModel parse_hand_model(const std::string& json_text);
HandModel load_hand_model(const std::string& path);
std::string serialize_hand_model(const HandModel& model);

/// Shipped default model, honouring the HANDTWIN_MODEL environment variable.
std::string default_model_path();
std::string data_path(const std::string& file);
/// "default" or empty selects default_model_path().
HandModel load_model_or_default(const std::string& path_or_default);

/// Actuated vector from a {joint_id: rad} map; unnamed joints are 0.
ActuatedVector actuated_from_named(const HandModel& model, const std::map<std::string, double>& named,
                                   const std::string& context);

}  // namespace handtwin
