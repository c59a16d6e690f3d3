#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "handtwin/error.hpp"
#include "handtwin/retarget.hpp"
#include "support.hpp"

using namespace handtwin;
namespace ts = testing_support;
using std::numbers::pi;

namespace {

// Flat hand in the z = 0 plane, every finger straight along its own root
// direction from the wrist.
LandmarkFrame flat_hand() {
  LandmarkFrame f;
  f.points[0] = Eigen::Vector3d::Zero();
  const double dirs[5] = {0.9, 0.25, 0.05, -0.15, -0.35};  // radians from +x
  for (int finger = 0; finger < 5; ++finger) {
    const Eigen::Vector3d u(std::cos(dirs[finger]), std::sin(dirs[finger]), 0.0);
    for (int i = 0; i < 4; ++i) f.points[1 + 4 * finger + i] = (0.05 + 0.02 * i) * u;
  }
  return f;
}

}  // namespace

TEST_CASE("flat hand gives zero angles") {
  const HumanAngles h = landmarks_to_human_angles(flat_hand());
  REQUIRE(h.allFinite());
  CHECK(h.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("landmarks generated from a robot state return its angles") {
  const auto& m = ts::default_model();
  std::mt19937_64 rng(40);
  for (int i = 0; i < 200; ++i) {
    const JointState s = resolve_full_state(m, ts::random_in_limits(m, rng));
    const HumanAngles h = landmarks_to_human_angles(landmarks_from_state(m, s));
    for (FingerName f : kAllFingers) {
      // Thumb slots are CMC flex/abd, MCP abd/flex; finger slots include DIP.
      for (int slot = 0; slot < 4; ++slot) {
        const double expected = s.full[m.full_index({int(f), slot})];
        CHECK(std::abs(h[human_index(f, slot)] - expected) < 1e-6);
      }
    }
  }
}

TEST_CASE("angles are invariant to landmark scale") {
  const auto& m = ts::default_model();
  std::mt19937_64 rng(41);
  for (int i = 0; i < 50; ++i) {
    LandmarkFrame f = landmarks_from_state(m, resolve_full_state(m, ts::random_in_limits(m, rng)));
    const HumanAngles a = landmarks_to_human_angles(f);
    for (auto& p : f.points) p *= 1000.0;
    CHECK((landmarks_to_human_angles(f) - a).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("degenerate frames mark the affected joints") {
  LandmarkFrame f = flat_hand();
  f.points[7] = f.points[6];  // index DIP on top of PIP
  const HumanAngles h = landmarks_to_human_angles(f);
  CHECK(std::isnan(h[human_index(FingerName::Index, 2)]));
  CHECK(std::isnan(h[human_index(FingerName::Index, 3)]));
  CHECK(std::isfinite(h[human_index(FingerName::Middle, 2)]));

  LandmarkFrame all_same;
  for (auto& p : all_same.points) p = Eigen::Vector3d(1, 2, 3);
  CHECK(landmarks_to_human_angles(all_same).array().isNaN().all());

  LandmarkFrame bad = flat_hand();
  bad.points[3].x() = INFINITY;
  CHECK_THROWS_AS(landmarks_to_human_angles(bad), DomainError);
}

TEST_CASE("w = 0 passes the human PIP through") {
  const auto& m = ts::default_model();
  RetargetConfig cfg;
  cfg.coupling_weight = 0.0;
  cfg.affine[human_index(FingerName::Ring, 2)] = {1.1, 0.05};
  HumanAngles h = HumanAngles::Zero();
  h[human_index(FingerName::Ring, 2)] = 0.7;
  h[human_index(FingerName::Ring, 3)] = 1.4;
  const ActuatedVector q = human_to_robot(m, h, cfg);
  const int ch = m.channel_of("ring_pip");
  CHECK(q[ch] == m.channel_limits(ch).clamp(1.1 * 0.7 + 0.05));
  h[human_index(FingerName::Ring, 2)] = 3.0;
  CHECK(human_to_robot(m, h, cfg)[ch] == m.channel_limits(ch).max);
}

TEST_CASE("consistent PIP/DIP pairs recover the PIP for any weight") {
  const AntiparallelogramLinkage link(0.02, 0.005);
  const Limits lim{0.0, 1.75};
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> up(0.0, 1.75), uw(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const double pip = up(rng);
    const double w = uw(rng);
    CHECK(std::abs(select_coupled_driver(link, lim, pip, ts::ref_coupling(link.k(), pip), w) - pip) < 1e-8);
  }
}

TEST_CASE("w = 1 inverts the coupling") {
  const AntiparallelogramLinkage link(0.03, 0.02);
  const double pip = select_coupled_driver(link, Limits{0.0, 3.0}, 0.0, 0.39479, 1.0);
  CHECK(std::abs(pip - 2 * std::atan(std::tan(0.39479 / 2) / 0.2)) < 1e-9);
  CHECK(std::abs(pip - pi / 2) < 1e-4);
}

TEST_CASE("selected PIP beats a dense scan of the objective") {
  const AntiparallelogramLinkage link(0.02, 0.006);
  const Limits lim{0.0, 1.75};
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-0.3, 2.2), uw(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double ph = u(rng), dh = u(rng), w = uw(rng);
    auto obj = [&](double x) {
      return (1 - w) * std::pow(x - ph, 2) + w * std::pow(ts::ref_coupling(link.k(), x) - dh, 2);
    };
    const double x = select_coupled_driver(link, lim, ph, dh, w);
    CHECK(lim.contains(x));
    double scan = 1e300;
    for (int j = 0; j <= 20000; ++j) scan = std::min(scan, obj(1.75 * j / 20000));
    CHECK(obj(x) <= scan + 1e-12);
  }
}

TEST_CASE("retargeted output always respects limits") {
  const auto& m = ts::default_model();
  std::mt19937_64 rng(44);
  std::uniform_real_distribution<double> u(-4.0, 4.0);
  RetargetConfig cfg;
  for (int i = 0; i < 500; ++i) {
    HumanAngles h;
    for (int k = 0; k < kHumanAngles; ++k) h[k] = (i % 7 == 0 && k % 5 == 0) ? NAN : u(rng);
    CHECK(check_limits(m, human_to_robot(m, h, cfg)).empty());
  }
}

TEST_CASE("robot state survives landmarks and retargeting within 2 degrees") {
  const auto& m = ts::default_model();
  std::mt19937_64 rng(45);
  RetargetConfig cfg;
  for (int i = 0; i < 500; ++i) {
    cfg.coupling_weight = (i % 11) / 10.0;
    const ActuatedVector q = ts::random_in_limits(m, rng);
    const ActuatedVector back =
        human_to_robot(m, landmarks_to_human_angles(landmarks_from_state(m, resolve_full_state(m, q))), cfg);
    CHECK((back - q).cwiseAbs().maxCoeff() < 0.035);
  }
}

TEST_CASE("EMA and velocity clamp") {
  RetargetConfig cfg;
  cfg.max_joint_velocity = 1e6;
  std::vector<TimedActuated> in;
  in.push_back({0.0, ActuatedVector::Zero()});
  for (int n = 1; n <= 10; ++n) in.push_back({0.02 * n, ActuatedVector::Ones()});
  const auto out = smooth_stream(in, cfg);
  REQUIRE(out.size() == 11);
  CHECK(out[0].q.isZero());
  for (int n = 1; n <= 10; ++n) {
    CHECK(out[n].q[0] == doctest::Approx(1.0 - std::pow(0.6, n)).epsilon(1e-12));
  }

  std::vector<TimedActuated> constant;
  ActuatedVector c = ActuatedVector::LinSpaced(-0.5, 0.7);
  for (int n = 0; n < 20; ++n) constant.push_back({0.1 * n, c});
  for (const auto& f : smooth_stream(constant, RetargetConfig{})) CHECK((f.q - c).cwiseAbs().maxCoeff() < 1e-15);

  RetargetConfig clamp_cfg;
  clamp_cfg.smoothing_alpha = 1.0;
  clamp_cfg.max_joint_velocity = 5.0;
  std::vector<TimedActuated> step = {{0.0, ActuatedVector::Zero()}};
  for (int n = 1; n <= 5; ++n) step.push_back({n / 50.0, ActuatedVector::Constant(10.0)});
  const auto clamped = smooth_stream(step, clamp_cfg);
  for (std::size_t n = 1; n < clamped.size(); ++n) {
    CHECK((clamped[n].q - clamped[n - 1].q).cwiseAbs().maxCoeff() == doctest::Approx(0.1).epsilon(1e-9));
  }
}

TEST_CASE("non-increasing timestamps are dropped and counted") {
  StreamDiagnostics d;
  std::vector<TimedActuated> in = {{0.0, ActuatedVector::Zero()},
                                   {0.1, ActuatedVector::Ones()},
                                   {0.1, ActuatedVector::Ones()},
                                   {0.05, ActuatedVector::Ones()},
                                   {0.2, ActuatedVector::Ones()}};
  const auto out = smooth_stream(in, RetargetConfig{}, &d);
  CHECK(out.size() == 3);
  CHECK(d.dropped_non_increasing == 2);
  CHECK(d.accepted == 3);
}

TEST_CASE("smoothing is causal") {
  std::mt19937_64 rng(46);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<TimedActuated> in;
  for (int n = 0; n < 40; ++n) {
    ActuatedVector q;
    for (int k = 0; k < kActuatedJoints; ++k) q[k] = u(rng);
    in.push_back({0.03 * n, q});
  }
  const auto full = smooth_stream(in, RetargetConfig{});
  for (std::size_t cut = 1; cut < in.size(); cut += 7) {
    const auto prefix = smooth_stream({in.begin(), in.begin() + cut}, RetargetConfig{});
    for (std::size_t n = 0; n < prefix.size(); ++n) CHECK(prefix[n].q == full[n].q);
  }
}

TEST_CASE("retarget config validation") {
  RetargetConfig c;
  c.smoothing_alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.max_joint_velocity = -1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.coupling_weight = 1.5;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("landmark records round trip through text") {
  const auto& m = ts::default_model();
  std::mt19937_64 rng(47);
  const LandmarkFrame f = landmarks_from_state(m, resolve_full_state(m, ts::random_in_limits(m, rng)), 1.25);
  const LandmarkFrame g = parse_landmark_record(format_landmark_record(f));
  CHECK(g.timestamp == 1.25);
  for (int i = 0; i < kLandmarkCount; ++i) CHECK(g.points[i] == f.points[i]);

  std::string commas = format_landmark_record(f);
  for (char& c : commas) if (c == ' ') c = ',';
  CHECK(parse_landmark_record(commas).points[20] == f.points[20]);
  CHECK_THROWS_AS(parse_landmark_record("0.1 2 3"), ParseError);
  CHECK_THROWS_AS(parse_landmark_record(format_landmark_record(f) + " x"), ParseError);

  const std::string path = "retarget_stream_test.txt";
  {
    std::ofstream out(path);
    out << "# recorded stream\n\n" << format_landmark_record(f) << "\n";
  }
  CHECK(load_landmark_stream(path).size() == 1);
  std::remove(path.c_str());
  CHECK_THROWS_AS(load_landmark_stream("/nonexistent/stream.txt"), IoError);
}

TEST_CASE("retargeter runs the whole chain and clamps") {
  const auto& m = ts::default_model();
  Retargeter r(m, RetargetConfig{});
  const JointState s = resolve_full_state(m, m.clamp(ActuatedVector::Constant(0.4)));
  const auto first = r.process(landmarks_from_state(m, s, 0.0));
  REQUIRE(first.has_value());
  CHECK((*first - s.actuated).cwiseAbs().maxCoeff() < 1e-6);
  CHECK_FALSE(r.process(landmarks_from_state(m, s, 0.0)).has_value());
  CHECK(r.diagnostics().dropped_non_increasing == 1);
}
