#include "handtwin/retarget.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "handtwin/error.hpp"

namespace handtwin {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Landmark index of a finger's first point (thumb CMC, otherwise MCP).
constexpr int first_landmark(FingerName f) { return 1 + 4 * static_cast<int>(f); }

// Abduction sign per finger: +1 rotates about the palmar normal.
constexpr double abduction_sign(FingerName f) {
  return (f == FingerName::Ring || f == FingerName::Little) ? -1.0 : 1.0;
}

double signed_angle(const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& axis) {
  return std::atan2(a.cross(b).dot(axis), a.dot(b));
}

double coupling_second_derivative(double k, double phi) {
  const double t = std::tan(0.5 * phi);
  const double den = 1.0 + k * k * t * t;
  return k * t * (1.0 - k * k) * (1.0 + t * t) / (den * den);
}

}  // namespace

HumanAngles landmarks_to_human_angles(const LandmarkFrame& frame) {
  HumanAngles out;
  out.setConstant(kNaN);
  for (const auto& p : frame.points) {
    if (!p.allFinite()) throw DomainError("landmark frame has non-finite points");
  }
  const auto& pts = frame.points;
  const Eigen::Vector3d wrist = pts[0];
  const double scale = (pts[5] - wrist).norm();
  if (!(scale > 0.0)) return out;
  const double eps = 1e-9 * scale;

  const Eigen::Vector3d toward_index = (pts[5] - wrist) / scale;
  const Eigen::Vector3d raw_normal = (pts[17] - wrist).cross(toward_index);
  if (raw_normal.norm() <= eps) return out;
  const Eigen::Vector3d n = raw_normal.normalized();

  auto in_plane = [&](const Eigen::Vector3d& v) -> Eigen::Vector3d { return v - v.dot(n) * n; };

  for (FingerName f : kAllFingers) {
    const int base = first_landmark(f);
    const Eigen::Vector3d ref_raw = in_plane(pts[base] - wrist);
    if (ref_raw.norm() <= eps) continue;
    Eigen::Matrix3d finger_frame;
    finger_frame.col(0) = ref_raw.normalized();
    finger_frame.col(2) = n;
    finger_frame.col(1) = n.cross(finger_frame.col(0));

    const Eigen::Vector3d b1 = pts[base + 1] - pts[base];
    const Eigen::Vector3d b2 = pts[base + 2] - pts[base + 1];
    const Eigen::Vector3d b3 = pts[base + 3] - pts[base + 2];
    const bool ok1 = b1.norm() > eps, ok2 = b2.norm() > eps, ok3 = b3.norm() > eps;
    if (!ok1) continue;
    const Eigen::Vector3d u = finger_frame.transpose() * b1;

    if (f == FingerName::Thumb) {
      // Metacarpal: flex about -z, then palmar abduction about -y.
      const double cmc_abd = std::atan2(u.z(), std::hypot(u.x(), u.y()));
      const double cmc_flex = std::atan2(-u.y(), u.x());
      out[human_index(f, 0)] = cmc_flex;
      out[human_index(f, 1)] = cmc_abd;
      if (!ok2) continue;
      const Eigen::Matrix3d meta = finger_frame *
                                   Eigen::AngleAxisd(cmc_flex, -Eigen::Vector3d::UnitZ()).toRotationMatrix() *
                                   Eigen::AngleAxisd(cmc_abd, -Eigen::Vector3d::UnitY()).toRotationMatrix();
      const Eigen::Vector3d v = meta.transpose() * b2;
      // Proximal phalanx: abduction about -y, then flexion about -z.
      out[human_index(f, 2)] = std::atan2(v.z(), v.x());
      out[human_index(f, 3)] = std::atan2(-v.y(), std::hypot(v.x(), v.z()));
      continue;
    }

    const double sgn = abduction_sign(f);
    const double abd_about_z = std::atan2(u.y(), u.x());
    out[human_index(f, 0)] = sgn * abd_about_z;
    out[human_index(f, 1)] = std::atan2(u.z(), std::hypot(u.x(), u.y()));
    const Eigen::Vector3d lateral =
        std::cos(abd_about_z) * finger_frame.col(1) - std::sin(abd_about_z) * finger_frame.col(0);
    const Eigen::Vector3d flex_axis = -lateral;
    if (ok2) out[human_index(f, 2)] = signed_angle(b1, b2, flex_axis);
    if (ok2 && ok3) out[human_index(f, 3)] = signed_angle(b2, b3, flex_axis);
  }
  return out;
}

LandmarkFrame landmarks_from_state(const HandModel& model, const JointState& state, double timestamp) {
  LandmarkFrame frame;
  frame.timestamp = timestamp;
  frame.points[0] = Eigen::Vector3d::Zero();
  const FingertipSet fk = forward_kinematics(model, state);
  for (FingerName f : kAllFingers) {
    const auto pts = fk.fingers[static_cast<int>(f)].skeleton_points(model.finger(f).root);
    if (pts.size() != 4) throw ValidationError(to_string(f), "landmark export needs exactly three segments");
    for (int i = 0; i < 4; ++i) frame.points[first_landmark(f) + i] = pts[i];
  }
  return frame;
}

void RetargetConfig::validate() const {
  if (!(smoothing_alpha > 0.0 && smoothing_alpha <= 1.0)) throw ValidationError("smoothing_alpha", "must lie in (0, 1]");
  if (!(max_joint_velocity > 0.0)) throw ValidationError("max_joint_velocity", "must be > 0");
  if (!(coupling_weight >= 0.0 && coupling_weight <= 1.0)) throw ValidationError("coupling_weight", "must lie in [0, 1]");
  for (std::size_t i = 0; i < affine.size(); ++i) {
    if (!std::isfinite(affine[i].scale) || !std::isfinite(affine[i].offset)) {
      throw ValidationError("affine[" + std::to_string(i) + "]", "non-finite");
    }
  }
}

double select_coupled_driver(const AntiparallelogramLinkage& link, const Limits& lim, double pip_h, double dip_h,
                             double w) {
  const double k = link.k();
  const double lo = std::max(lim.min, 0.0);
  const double hi = std::min(lim.max, std::nextafter(std::numbers::pi, 0.0));
  auto f = [&](double phi) {
    const double a = phi - pip_h;
    const double b = flexion_coupling_k(k, phi) - dip_h;
    return (1.0 - w) * a * a + w * b * b;
  };
  auto df = [&](double phi) {
    const double b = flexion_coupling_k(k, phi) - dip_h;
    return 2.0 * (1.0 - w) * (phi - pip_h) + 2.0 * w * b * flexion_coupling_derivative_k(k, phi);
  };
  auto d2f = [&](double phi) {
    const double c1 = flexion_coupling_derivative_k(k, phi);
    const double b = flexion_coupling_k(k, phi) - dip_h;
    return 2.0 * (1.0 - w) + 2.0 * w * (c1 * c1 + b * coupling_second_derivative(k, phi));
  };

  constexpr int samples = 256;
  auto grid = [&](int i) { return lo + (hi - lo) * double(i) / samples; };
  int best = 0;
  double best_f = f(lo);
  for (int i = 1; i <= samples; ++i) {
    const double v = f(grid(i));
    if (v < best_f) {
      best_f = v;
      best = i;
    }
  }
  double a = grid(std::max(0, best - 1));
  double b = grid(std::min(samples, best + 1));
  if (!(df(a) < 0.0 && df(b) > 0.0)) return grid(best);  // boundary minimum

  double x = grid(best);
  for (int it = 0; it < 100; ++it) {
    const double g = df(x);
    if (g == 0.0) break;
    if (g < 0.0) a = x; else b = x;
    const double h = d2f(x);
    double next = x - g / h;
    if (!(h > 0.0) || !(next > a && next < b)) next = 0.5 * (a + b);
    if (std::abs(next - x) < 1e-16 || b - a < 1e-15) {
      x = next;
      break;
    }
    x = next;
  }
  return f(x) <= best_f ? x : grid(best);
}

ActuatedVector human_to_robot(const HandModel& model, const HumanAngles& human, const RetargetConfig& cfg) {
  cfg.validate();
  ActuatedVector q = model.clamp(ActuatedVector::Zero());
  auto mapped = [&](int slot) { return cfg.affine[slot].apply(human[slot]); };

  for (FingerName f : kAllFingers) {
    const int fi = static_cast<int>(f);
    const FingerModel& finger = model.finger(f);
    const int slot0 = human_index(f, 0);
    if (f == FingerName::Thumb) {
      for (int j = 0; j < 4; ++j) {
        const int ch = model.channel_of(JointRef{fi, j});
        const double v = mapped(slot0 + j);
        if (std::isfinite(v)) q[ch] = model.channel_limits(ch).clamp(v);
      }
      continue;
    }
    for (int j = 0; j < 2; ++j) {
      const int ch = model.channel_of(JointRef{fi, j});
      const double v = mapped(slot0 + j);
      if (std::isfinite(v)) q[ch] = model.channel_limits(ch).clamp(v);
    }
    const int pip_ch = model.channel_of(JointRef{fi, 2});
    const Limits& pip_lim = model.channel_limits(pip_ch);
    const double pip_h = mapped(slot0 + 2);
    const double dip_h = mapped(slot0 + 3);
    if (!std::isfinite(pip_h)) continue;
    if (!finger.coupling || !std::isfinite(dip_h)) {
      q[pip_ch] = pip_lim.clamp(pip_h);
      continue;
    }
    q[pip_ch] = pip_lim.clamp(select_coupled_driver(*finger.coupling, pip_lim, pip_h, dip_h, cfg.coupling_weight));
  }
  return q;
}

StreamSmoother::StreamSmoother(const RetargetConfig& cfg)
    : alpha_(cfg.smoothing_alpha), max_velocity_(cfg.max_joint_velocity) {
  cfg.validate();
}

void StreamSmoother::reset() {
  last_time_.reset();
  state_.setZero();
  diag_ = {};
}

std::optional<ActuatedVector> StreamSmoother::push(double timestamp, const ActuatedVector& q) {
  if (!last_time_) {
    last_time_ = timestamp;
    state_ = q;
    ++diag_.accepted;
    return state_;
  }
  const double dt = timestamp - *last_time_;
  if (!(dt > 0.0)) {
    ++diag_.dropped_non_increasing;
    return std::nullopt;
  }
  const double max_step = max_velocity_ * dt;
  const ActuatedVector ema = alpha_ * q + (1.0 - alpha_) * state_;
  for (int i = 0; i < kActuatedJoints; ++i) {
    const double delta = std::clamp(ema[i] - state_[i], -max_step, max_step);
    state_[i] += delta;
  }
  last_time_ = timestamp;
  ++diag_.accepted;
  return state_;
}

std::vector<TimedActuated> smooth_stream(const std::vector<TimedActuated>& input, const RetargetConfig& cfg,
                                         StreamDiagnostics* diagnostics) {
  StreamSmoother smoother(cfg);
  std::vector<TimedActuated> out;
  out.reserve(input.size());
  for (const auto& frame : input) {
    if (auto q = smoother.push(frame.timestamp, frame.q)) out.push_back({frame.timestamp, *q});
  }
  if (diagnostics) *diagnostics = smoother.diagnostics();
  return out;
}

Retargeter::Retargeter(const HandModel& model, RetargetConfig cfg)
    : model_(&model), cfg_(std::move(cfg)), smoother_(cfg_) {}

std::optional<ActuatedVector> Retargeter::process(const LandmarkFrame& frame) {
  const ActuatedVector q = human_to_robot(*model_, landmarks_to_human_angles(frame), cfg_);
  auto out = smoother_.push(frame.timestamp, q);
  if (out) *out = model_->clamp(*out);
  return out;
}

LandmarkFrame parse_landmark_record(const std::string& line) {
  std::string cleaned = line;
  for (char& c : cleaned) {
    if (c == ',' || c == ';') c = ' ';
  }
  std::istringstream in(cleaned);
  std::vector<double> values;
  std::string token;
  while (in >> token) {
    try {
      std::size_t used = 0;
      const double v = std::stod(token, &used);
      if (used != token.size()) throw std::invalid_argument(token);
      values.push_back(v);
    } catch (const std::logic_error&) {
      throw ParseError("landmark record: malformed number '" + token + "'");
    }
  }
  if (values.size() != 1 + 3 * kLandmarkCount) {
    throw ParseError("landmark record: expected 64 numbers (timestamp + 63), found " + std::to_string(values.size()));
  }
  LandmarkFrame frame;
  frame.timestamp = values[0];
  for (int i = 0; i < kLandmarkCount; ++i) {
    frame.points[i] = {values[1 + 3 * i], values[2 + 3 * i], values[3 + 3 * i]};
  }
  return frame;
}

std::vector<LandmarkFrame> load_landmark_stream(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::vector<LandmarkFrame> frames;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    try {
      frames.push_back(parse_landmark_record(line));
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return frames;
}

std::string format_landmark_record(const LandmarkFrame& frame) {
  std::ostringstream os;
  os.precision(17);
  os << frame.timestamp;
  for (const auto& p : frame.points) os << ' ' << p.x() << ' ' << p.y() << ' ' << p.z();
  return os.str();
}

}  // namespace handtwin
