#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "handtwin/hand_model.hpp"
#include "handtwin/kinematics.hpp"

namespace handtwin {

inline constexpr int kReportSchemaVersion = 1;
inline constexpr int kKapandjiPositions = 11;
inline constexpr double kDefaultReachTolerance = 0.005;  // m

struct GraspPose {
  int id = 0;
  std::string name;
  ActuatedVector actuated = ActuatedVector::Zero();
  std::string notes;
};

/// Grasp library document; joints omitted from a pose default to 0 rad.
std::vector<GraspPose> parse_grasp_library(const HandModel& model, const std::string& json_text);
std::vector<GraspPose> load_grasp_library(const HandModel& model, const std::string& path);
std::string default_grasp_library_path();

struct GraspVerdict {
  int id = 0;
  std::string name;
  bool valid = false;
  std::vector<LimitViolation> violations;
  FullVector full = FullVector::Zero();
  std::array<Eigen::Vector3d, kFingers> tips;
};

struct GraspReport {
  std::vector<GraspVerdict> poses;  // library order
  int valid_count = 0;
};

/// Per-pose strict limit check, coupling resolution and fingertip positions.
/// Throws ValidationError on an empty library or duplicate ids.
GraspReport validate_grasp_library(const HandModel& model, const std::vector<GraspPose>& library);

struct KapandjiAnchor {
  FingerName finger = FingerName::Index;
  std::string segment;
  Eigen::Vector3d offset = Eigen::Vector3d::Zero();  // m, segment-local
};

struct KapandjiTarget {
  int index = 0;
  std::string label;
  KapandjiAnchor anchor;
  ActuatedVector posture = ActuatedVector::Zero();  // only non-thumb channels are used
};

struct KapandjiTargetSet {
  std::vector<KapandjiTarget> targets;
  double tolerance = kDefaultReachTolerance;
};

KapandjiTargetSet parse_kapandji_targets(const HandModel& model, const std::string& json_text);
KapandjiTargetSet load_kapandji_targets(const HandModel& model, const std::string& path);
std::string default_kapandji_targets_path();

struct KapandjiPosition {
  int index = 0;
  std::string label;
  bool reachable = false;
  double residual = 0.0;  // m, best over IK seeds
  Eigen::Vector3d anchor_world = Eigen::Vector3d::Zero();
  ActuatedVector thumb_solution = ActuatedVector::Zero();
};

struct KapandjiReport {
  int score = 0;
  double tolerance = kDefaultReachTolerance;
  std::vector<KapandjiPosition> positions;  // index order
};

/// Deterministic thumb IK seeds spread over the thumb's joint box.
std::vector<ActuatedVector> thumb_seed_set(const HandModel& model);

/**
 * Poses the non-thumb fingers per target, places the anchor in the palm
 * frame and solves thumb IK from every seed in thumb_seed_set. A position is
 * reachable when the best residual is within `tol`.
 */
KapandjiReport run_kapandji(const HandModel& model, const std::vector<KapandjiTarget>& targets, double tol,
                            const IkOptions& ik = {});

using EvaluationReport = std::variant<GraspReport, KapandjiReport>;

/// Canonical JSON; same input gives byte-identical output.
std::string emit_evaluation_report(const HandModel& model, const std::vector<EvaluationReport>& reports);

}  // namespace handtwin
