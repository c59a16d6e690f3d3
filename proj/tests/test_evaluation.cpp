#include <algorithm>
#include <random>

#include "doctest.h"
#include "handtwin/error.hpp"
#include "handtwin/evaluation.hpp"
#include "support.hpp"

using namespace handtwin;
namespace ts = testing_support;

namespace {

const std::vector<GraspPose>& shipped_library() {
  static const auto lib = load_grasp_library(ts::default_model(), default_grasp_library_path());
  return lib;
}

const KapandjiTargetSet& shipped_targets() {
  static const auto set = load_kapandji_targets(ts::default_model(), default_kapandji_targets_path());
  return set;
}

// Shipped targets with position `index` re-anchored at a palm-frame point,
// expressed in the index finger's root frame.
std::vector<KapandjiTarget> with_point(int index, const Eigen::Vector3d& palm_point) {
  auto targets = shipped_targets().targets;
  for (auto& t : targets) {
    if (t.index != index) continue;
    t.anchor.finger = FingerName::Index;
    t.anchor.segment = "root";
    t.anchor.offset = ts::default_model().finger(FingerName::Index).root.inverse() * palm_point;
  }
  return targets;
}

}  // namespace

TEST_CASE("shipped grasp library validates 33 of 33") {
  const auto& m = ts::default_model();
  const auto& lib = shipped_library();
  REQUIRE(lib.size() == 33);
  const GraspReport r = validate_grasp_library(m, lib);
  CHECK(r.valid_count == 33);
  for (int id = 1; id <= 33; ++id) {
    CHECK(std::count_if(lib.begin(), lib.end(), [&](const GraspPose& p) { return p.id == id; }) == 1);
  }
  for (const auto& v : r.poses) {
    CHECK(v.violations.empty());
    CHECK(v.full == resolve_full_state(m, lib[&v - &r.poses[0]].actuated).full);
  }
}

TEST_CASE("rest pose is valid; an over-limit joint is flagged by name") {
  const auto& m = ts::default_model();
  GraspPose rest{1, "rest", ActuatedVector::Zero(), ""};
  GraspPose bad{2, "bad", ActuatedVector::Zero(), ""};
  const int ch = m.channel_of("middle_pip");
  bad.actuated[ch] = m.channel_limits(ch).max + 0.2;
  const GraspReport r = validate_grasp_library(m, {rest, bad});
  CHECK(r.valid_count == 1);
  CHECK(r.poses[0].valid);
  CHECK_FALSE(r.poses[1].valid);
  REQUIRE(r.poses[1].violations.size() == 1);
  CHECK(r.poses[1].violations[0].joint_id == "middle_pip");
}

TEST_CASE("grasp validation rejects empty libraries and duplicate ids") {
  const auto& m = ts::default_model();
  CHECK_THROWS_AS(validate_grasp_library(m, {}), ValidationError);
  GraspPose a{4, "a", ActuatedVector::Zero(), ""};
  CHECK_THROWS_AS(validate_grasp_library(m, {a, a}), ValidationError);
}

TEST_CASE("grasp verdicts do not depend on library order") {
  const auto& m = ts::default_model();
  auto lib = shipped_library();
  // Mix in some invalid poses so both verdicts appear.
  std::mt19937_64 rng(30);
  for (int i = 0; i < 5; ++i) lib[i * 6].actuated[i] = 9.0;
  const GraspReport base = validate_grasp_library(m, lib);
  for (int t = 0; t < 20; ++t) {
    auto shuffled = lib;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const GraspReport r = validate_grasp_library(m, shuffled);
    CHECK(r.valid_count == base.valid_count);
    for (std::size_t i = 0; i < shuffled.size(); ++i) {
      const auto it = std::find_if(base.poses.begin(), base.poses.end(),
                                   [&](const GraspVerdict& v) { return v.id == shuffled[i].id; });
      REQUIRE(it != base.poses.end());
      CHECK(r.poses[i].id == shuffled[i].id);
      CHECK(r.poses[i].valid == it->valid);
      CHECK(r.poses[i].full == it->full);
    }
  }
}

TEST_CASE("grasp library documents are parsed strictly") {
  const auto& m = ts::default_model();
  CHECK_THROWS_AS(parse_grasp_library(m, "[]"), ParseError);
  CHECK_THROWS_AS(parse_grasp_library(m, R"({"format_version":1})"), ParseError);
  CHECK_THROWS_AS(parse_grasp_library(m, R"({"format_version":2,"poses":[]})"), ValidationError);
  CHECK_THROWS_AS(parse_grasp_library(m, R"({"format_version":1,"poses":[{"id":1,"actuated":{"index_dip":0.1}}]})"),
                  ValidationError);
  const auto lib = parse_grasp_library(m, R"({"format_version":1,"poses":[{"id":7,"name":"x","actuated":{"index_pip":0.4}}]})");
  REQUIRE(lib.size() == 1);
  CHECK(lib[0].actuated[m.channel_of("index_pip")] == 0.4);
}

TEST_CASE("shipped Kapandji targets score 9 with 0 and 8 missed") {
  const auto& m = ts::default_model();
  const auto& set = shipped_targets();
  CHECK(set.tolerance == kDefaultReachTolerance);
  const KapandjiReport r = run_kapandji(m, set.targets, set.tolerance);
  CHECK(r.score == 9);
  REQUIRE(r.positions.size() == 11);
  for (const auto& p : r.positions) {
    CHECK(p.reachable == (p.index != 0 && p.index != 8));
  }
}

TEST_CASE("an anchor at the resting thumb tip is reached exactly") {
  const auto& m = ts::default_model();
  const JointState rest = resolve_full_state(m, m.clamp(ActuatedVector::Zero()));
  const Eigen::Vector3d tip = forward_kinematics(m, rest).tip(FingerName::Thumb);
  const KapandjiReport r = run_kapandji(m, with_point(3, tip), kDefaultReachTolerance);
  CHECK(r.positions[3].reachable);
  CHECK(r.positions[3].residual < 1e-12);
}

TEST_CASE("an anchor beyond the thumb's reach is unreachable by at least the gap") {
  const auto& m = ts::default_model();
  const auto& thumb = m.finger(FingerName::Thumb);
  const Eigen::Vector3d origin = thumb.root.translation;
  const double reach = thumb.total_length();
  const Eigen::Vector3d far = origin + 1.6 * reach * Eigen::Vector3d(0.6, 0.0, 0.8);
  const KapandjiReport r = run_kapandji(m, with_point(5, far), kDefaultReachTolerance);
  const double distance = (far - origin).norm();
  CHECK_FALSE(r.positions[5].reachable);
  CHECK(r.positions[5].residual >= distance - reach - kDefaultReachTolerance);
  CHECK(r.score == 8);
}

TEST_CASE("Kapandji score is monotone in the tolerance") {
  const auto& m = ts::default_model();
  const auto& set = shipped_targets();
  int prev = -1;
  for (double tol = 0.0; tol <= 0.03; tol += 0.0025) {
    const int s = run_kapandji(m, set.targets, tol).score;
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("Kapandji reachability does not depend on the seed order") {
  const auto& m = ts::default_model();
  auto targets = shipped_targets().targets;
  const KapandjiReport a = run_kapandji(m, targets, kDefaultReachTolerance);
  std::reverse(targets.begin(), targets.end());
  const KapandjiReport b = run_kapandji(m, targets, kDefaultReachTolerance);
  for (int i = 0; i < kKapandjiPositions; ++i) CHECK(a.positions[i].reachable == b.positions[i].reachable);
  CHECK(b.positions[0].index == 0);
}

TEST_CASE("Kapandji input validation") {
  const auto& m = ts::default_model();
  auto targets = shipped_targets().targets;
  targets.pop_back();
  CHECK_THROWS_AS(run_kapandji(m, targets, 0.005), ValidationError);
  targets = shipped_targets().targets;
  targets[1].index = 0;
  CHECK_THROWS_AS(run_kapandji(m, targets, 0.005), ValidationError);
  targets = shipped_targets().targets;
  targets[2].posture[m.channel_of("index_pip")] = 5.0;
  CHECK_THROWS_AS(run_kapandji(m, targets, 0.005), ValidationError);
  CHECK_THROWS_AS(parse_kapandji_targets(m, R"({"format_version":1,"targets":[{"index":0,"label":"x",
      "anchor":{"finger":"thumb","segment":"distal","offset":[0,0,0]}}]})"), ValidationError);
  CHECK_THROWS_AS(parse_kapandji_targets(m, R"({"format_version":1,"targets":[{"index":0,"label":"x",
      "anchor":{"finger":"index","segment":"nowhere","offset":[0,0,0]}}]})"), ValidationError);
}

TEST_CASE("evaluation report is deterministic and carries the score") {
  const auto& m = ts::default_model();
  const auto& set = shipped_targets();
  const KapandjiReport k = run_kapandji(m, set.targets, set.tolerance);
  const GraspReport g = validate_grasp_library(m, shipped_library());
  const std::string a = emit_evaluation_report(m, {k, g});
  const std::string b = emit_evaluation_report(m, {run_kapandji(m, set.targets, set.tolerance),
                                                   validate_grasp_library(m, shipped_library())});
  CHECK(a == b);
  CHECK(a.find("\"score\": 9") != std::string::npos);
  CHECK(a.find("\"schema_version\": 1") != std::string::npos);
  const auto doc = nlohmann::json::parse(a);
  CHECK(doc["reports"][1]["valid_count"] == 33);
  CHECK_THROWS_AS(emit_evaluation_report(m, {}), ValidationError);
  CHECK_THROWS_AS(emit_evaluation_report(m, {GraspReport{}}), ValidationError);
}
