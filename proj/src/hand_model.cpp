#include "handtwin/hand_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "json.hpp"

#include "handtwin/error.hpp"

namespace handtwin {

using nlohmann::json;

namespace {

constexpr std::array<const char*, kFingers> kFingerNames = {"thumb", "index", "middle", "ring", "little"};

const char* kind_name(JointKind k) {
  switch (k) {
    case JointKind::Actuated: return "actuated";
    case JointKind::Coupled: return "coupled";
    case JointKind::FixedRatio: return "fixed-ratio";
  }
  return "?";
}

JointKind kind_from_string(const std::string& s, const std::string& field) {
  if (s == "actuated") return JointKind::Actuated;
  if (s == "coupled") return JointKind::Coupled;
  if (s == "fixed-ratio") return JointKind::FixedRatio;
  throw ValidationError(field, "unknown joint kind '" + s + "'");
}

void validate_finger(const FingerModel& f, const std::string& path) {
  const bool thumb = f.name == FingerName::Thumb;
  const std::size_t expected_actuated = thumb ? 4 : 3;
  if (f.segments.empty()) throw ValidationError(path + ".segments", "no segments");
  std::set<std::string> seg_ids;
  for (std::size_t s = 0; s < f.segments.size(); ++s) {
    const auto& seg = f.segments[s];
    const std::string sp = path + ".segments[" + std::to_string(s) + "]";
    if (seg.id.empty() || seg.id == kRootSegment) throw ValidationError(sp + ".id", "invalid segment id");
    if (!seg_ids.insert(seg.id).second) throw ValidationError(sp + ".id", "duplicate segment '" + seg.id + "'");
    if (!(seg.length > 0.0) || !std::isfinite(seg.length)) {
      throw ValidationError(sp + ".length", "segment length must be > 0");
    }
  }
  if (!f.root.is_proper()) throw ValidationError(path + ".root.rotation", "not a proper rotation");
  if (!f.root.translation.allFinite()) throw ValidationError(path + ".root.translation", "non-finite");

  if (f.joints.size() != expected_actuated + 1) {
    throw ValidationError(path + ".joints", std::string("expected ") + std::to_string(expected_actuated + 1) +
                                                " joints for " + to_string(f.name) + ", found " +
                                                std::to_string(f.joints.size()));
  }
  int last_segment = -1;
  std::set<std::string> joint_ids;
  for (std::size_t j = 0; j < f.joints.size(); ++j) {
    const auto& js = f.joints[j];
    const std::string jp = path + ".joints[" + std::to_string(j) + "]";
    if (js.id.empty()) throw ValidationError(jp + ".id", "empty joint id");
    if (!joint_ids.insert(js.id).second) throw ValidationError(jp + ".id", "duplicate joint '" + js.id + "'");
    const bool want_actuated = j < expected_actuated;
    if (want_actuated != (js.kind == JointKind::Actuated)) {
      throw ValidationError(jp + ".kind", want_actuated ? "expected an actuated joint here"
                                                        : "last joint must be coupled or fixed-ratio");
    }
    if (!js.axis.allFinite() || std::abs(js.axis.norm() - 1.0) > 1e-9) {
      throw ValidationError(jp + ".axis", "axis must have unit norm");
    }
    if (!std::isfinite(js.limits.min) || !std::isfinite(js.limits.max) || !(js.limits.min < js.limits.max)) {
      throw ValidationError(jp + ".limits", "need finite min < max");
    }
    int seg = -1;
    if (js.parent_segment != kRootSegment) {
      auto it = std::find_if(f.segments.begin(), f.segments.end(),
                             [&](const Segment& s) { return s.id == js.parent_segment; });
      if (it == f.segments.end()) {
        throw ValidationError(jp + ".parent_segment", "unknown segment '" + js.parent_segment + "'");
      }
      seg = int(it - f.segments.begin());
    }
    if (seg < last_segment) throw ValidationError(jp + ".parent_segment", "joints must be ordered root to tip");
    if (seg == int(f.segments.size()) - 1) {
      throw ValidationError(jp + ".parent_segment", "no joint may sit at the distal tip");
    }
    last_segment = seg;

    if (js.kind == JointKind::Actuated) {
      if (!js.actuation) throw ValidationError(jp + ".actuation", "actuated joint needs actuation parameters");
      const auto& a = *js.actuation;
      if (!(a.joint_pulley_radius > 0.0)) throw ValidationError(jp + ".actuation.joint_pulley_radius", "must be > 0");
      if (!(a.servo_pulley_radius > 0.0)) throw ValidationError(jp + ".actuation.servo_pulley_radius", "must be > 0");
      if (!(a.servo_torque_limit > 0.0)) throw ValidationError(jp + ".actuation.servo_torque_limit", "must be > 0");
      if (!js.driver.empty()) throw ValidationError(jp + ".driver", "actuated joints have no driver");
    } else {
      if (js.actuation) throw ValidationError(jp + ".actuation", "driven joints are not actuated");
      auto drv = std::find_if(f.joints.begin(), f.joints.end(), [&](const JointSpec& o) { return o.id == js.driver; });
      if (drv == f.joints.end() || drv->kind != JointKind::Actuated) {
        throw ValidationError(jp + ".driver", "must name one actuated joint of the same finger");
      }
      double lo = 0.0, hi = 0.0;
      if (js.kind == JointKind::Coupled) {
        if (!f.coupling) throw ValidationError(path + ".coupling", "coupled joint '" + js.id + "' needs a linkage");
        if (drv->limits.min < 0.0 || drv->limits.max >= std::numbers::pi) {
          throw ValidationError(jp + ".driver", "driver limits must lie in [0, pi) for the linkage");
        }
        lo = flexion_coupling(*f.coupling, drv->limits.min);
        hi = flexion_coupling(*f.coupling, drv->limits.max);
      } else {
        if (!std::isfinite(js.ratio) || js.ratio == 0.0) throw ValidationError(jp + ".ratio", "must be finite, nonzero");
        lo = std::min(js.ratio * drv->limits.min, js.ratio * drv->limits.max);
        hi = std::max(js.ratio * drv->limits.min, js.ratio * drv->limits.max);
      }
      if (lo < js.limits.min - 1e-12 || hi > js.limits.max + 1e-12) {
        throw ValidationError(jp + ".limits", "must contain the driven range of '" + js.driver + "'");
      }
    }
  }
}

Eigen::Vector3d vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) throw ParseError(field + ": expected 3-element array");
  Eigen::Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError(field + ": expected numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

const json& member(const json& j, const char* key, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected object");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path + "." + key + ": missing");
  return *it;
}

double number(const json& j, const char* key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_number()) throw ParseError(path + "." + key + ": expected number");
  return v.get<double>();
}

std::string text(const json& j, const char* key, const std::string& path) {
  const json& v = member(j, key, path);
  if (!v.is_string()) throw ParseError(path + "." + key + ": expected string");
  return v.get<std::string>();
}

json to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

FingerModel parse_finger(const json& jf, const std::string& path) {
  FingerModel f;
  try {
    f.name = finger_from_string(text(jf, "name", path));
  } catch (const HandError&) {
    throw ValidationError(path + ".name", "unknown finger name");
  }

  const json& root = member(jf, "root", path);
  const json& rot = member(root, "rotation", path + ".root");
  if (!rot.is_array() || rot.size() != 3) throw ParseError(path + ".root.rotation: expected 3x3 array");
  for (int r = 0; r < 3; ++r) f.root.rotation.row(r) = vec3(rot[r], path + ".root.rotation").transpose();
  f.root.translation = vec3(member(root, "translation", path + ".root"), path + ".root.translation");

  const json& segs = member(jf, "segments", path);
  if (!segs.is_array()) throw ParseError(path + ".segments: expected array");
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const std::string sp = path + ".segments[" + std::to_string(i) + "]";
    f.segments.push_back({text(segs[i], "id", sp), number(segs[i], "length", sp)});
  }

  const json& joints = member(jf, "joints", path);
  if (!joints.is_array()) throw ParseError(path + ".joints: expected array");
  for (std::size_t i = 0; i < joints.size(); ++i) {
    const json& jj = joints[i];
    const std::string jp = path + ".joints[" + std::to_string(i) + "]";
    JointSpec js;
    js.id = text(jj, "id", jp);
    js.kind = kind_from_string(text(jj, "kind", jp), jp + ".kind");
    js.axis = vec3(member(jj, "axis", jp), jp + ".axis");
    const json& lim = member(jj, "limits", jp);
    if (!lim.is_array() || lim.size() != 2 || !lim[0].is_number() || !lim[1].is_number()) {
      throw ParseError(jp + ".limits: expected [min, max]");
    }
    js.limits = {lim[0].get<double>(), lim[1].get<double>()};
    js.parent_segment = text(jj, "parent_segment", jp);
    if (jj.contains("driver")) js.driver = text(jj, "driver", jp);
    if (jj.contains("ratio")) js.ratio = number(jj, "ratio", jp);
    if (jj.contains("actuation")) {
      const json& ja = jj["actuation"];
      const std::string ap = jp + ".actuation";
      js.actuation = Actuation{number(ja, "joint_pulley_radius", ap), number(ja, "servo_pulley_radius", ap),
                               number(ja, "servo_torque_limit", ap)};
    }
    f.joints.push_back(std::move(js));
  }

  if (jf.contains("coupling") && !jf["coupling"].is_null()) {
    const json& jc = jf["coupling"];
    const std::string cp = path + ".coupling";
    const double l1 = number(jc, "l1", cp);
    const double l2 = number(jc, "l2", cp);
    try {
      f.coupling = AntiparallelogramLinkage(l1, l2);
    } catch (const ValidationError& e) {
      throw ValidationError(cp, std::string("degenerate anti-parallelogram: ") + e.what());
    }
  }
  return f;
}

}  // namespace

const char* to_string(FingerName f) { return kFingerNames[static_cast<int>(f)]; }

FingerName finger_from_string(const std::string& s) {
  for (int i = 0; i < kFingers; ++i) {
    if (s == kFingerNames[i]) return static_cast<FingerName>(i);
  }
  throw ValidationError("finger", "unknown finger '" + s + "'");
}

int FingerModel::segment_index(const std::string& id) const {
  if (id == kRootSegment) return -1;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (segments[i].id == id) return int(i);
  }
  throw ValidationError("segment", "finger " + std::string(to_string(name)) + " has no segment '" + id + "'");
}

double FingerModel::total_length() const {
  double sum = 0.0;
  for (const auto& s : segments) sum += s.length;
  return sum;
}

HandModel::HandModel(std::string name, std::array<FingerModel, kFingers> fingers,
                     std::map<std::string, int> wire_map)
    : name_(std::move(name)), fingers_(std::move(fingers)), wire_map_(std::move(wire_map)) {
  int actuated = 0;
  int driven = 0;
  std::set<std::string> all_ids;
  int offset = 0;
  for (int fi = 0; fi < kFingers; ++fi) {
    const auto& f = fingers_[fi];
    const std::string path = std::string("fingers.") + kFingerNames[fi];
    if (static_cast<int>(f.name) != fi) throw ValidationError(path + ".name", "fingers out of canonical order");
    validate_finger(f, path);
    full_offset_[fi] = offset;
    offset += int(f.joints.size());
    for (const auto& j : f.joints) {
      if (!all_ids.insert(j.id).second) throw ValidationError("joints", "joint id '" + j.id + "' used twice");
      (j.kind == JointKind::Actuated ? actuated : driven)++;
    }
  }
  if (actuated != kActuatedJoints || driven != kCoupledJoints) {
    throw ValidationError("fingers", "expected 16 actuated and 5 coupled joints, found " +
                                         std::to_string(actuated) + " and " + std::to_string(driven));
  }

  std::array<bool, kActuatedJoints> used{};
  for (int fi = 0; fi < kFingers; ++fi) joint_channel_[fi].assign(fingers_[fi].joints.size(), -1);
  for (const auto& [id, ch] : wire_map_) {
    const std::string field = "wire_map." + id;
    if (ch < 0 || ch >= kActuatedJoints) throw ValidationError(field, "channel " + std::to_string(ch) + " outside 0..15");
    if (used[ch]) throw ValidationError("wire_map", "channel " + std::to_string(ch) + " assigned twice");
    JointRef ref;
    try {
      ref = find_joint(id);
    } catch (const ValidationError&) {
      throw ValidationError(field, "unknown joint");
    }
    if (joint(ref).kind != JointKind::Actuated) throw ValidationError(field, "only actuated joints take a channel");
    used[ch] = true;
    channel_joint_[ch] = ref;
    joint_channel_[ref.finger][ref.joint] = ch;
  }
  for (int fi = 0; fi < kFingers; ++fi) {
    for (std::size_t j = 0; j < fingers_[fi].joints.size(); ++j) {
      if (fingers_[fi].joints[j].kind == JointKind::Actuated && joint_channel_[fi][j] < 0) {
        throw ValidationError("wire_map", "actuated joint '" + fingers_[fi].joints[j].id + "' has no channel");
      }
    }
  }
}

int HandModel::channel_of(const std::string& joint_id) const {
  auto it = wire_map_.find(joint_id);
  if (it == wire_map_.end()) throw ValidationError(joint_id, "not an actuated joint of the model");
  return it->second;
}

JointRef HandModel::find_joint(const std::string& joint_id) const {
  for (int fi = 0; fi < kFingers; ++fi) {
    for (std::size_t j = 0; j < fingers_[fi].joints.size(); ++j) {
      if (fingers_[fi].joints[j].id == joint_id) return {fi, int(j)};
    }
  }
  throw ValidationError(joint_id, "unknown joint");
}

JointRef HandModel::full_joint(int full_index) const {
  for (int fi = kFingers - 1; fi >= 0; --fi) {
    if (full_index >= full_offset_[fi]) return {fi, full_index - full_offset_[fi]};
  }
  throw ValidationError("full_index", "out of range");
}

std::vector<int> HandModel::finger_channels(FingerName f) const {
  std::vector<int> out;
  const int fi = static_cast<int>(f);
  for (int ch : joint_channel_[fi]) {
    if (ch >= 0) out.push_back(ch);
  }
  return out;
}

ActuatedVector HandModel::lower_limits() const {
  ActuatedVector v;
  for (int c = 0; c < kActuatedJoints; ++c) v[c] = channel_limits(c).min;
  return v;
}

ActuatedVector HandModel::upper_limits() const {
  ActuatedVector v;
  for (int c = 0; c < kActuatedJoints; ++c) v[c] = channel_limits(c).max;
  return v;
}

ActuatedVector HandModel::clamp(const ActuatedVector& q) const {
  ActuatedVector out;
  for (int c = 0; c < kActuatedJoints; ++c) out[c] = channel_limits(c).clamp(q[c]);
  return out;
}

double driven_angle(const FingerModel& finger, const JointSpec& driven, double driver_angle) {
  if (driven.kind == JointKind::FixedRatio) return driven.ratio * driver_angle;
  return flexion_coupling(*finger.coupling, driver_angle);
}

double driven_angle_derivative(const FingerModel& finger, const JointSpec& driven, double driver_angle) {
  if (driven.kind == JointKind::FixedRatio) return driven.ratio;
  return flexion_coupling_derivative(*finger.coupling, driver_angle);
}

JointState resolve_full_state(const HandModel& model, const ActuatedVector& actuated) {
  if (!actuated.allFinite()) throw DomainError("actuated vector has non-finite entries");
  JointState s;
  s.actuated = model.clamp(actuated);
  for (int fi = 0; fi < kFingers; ++fi) {
    const auto& f = model.fingers()[fi];
    for (std::size_t j = 0; j < f.joints.size(); ++j) {
      const JointRef ref{fi, int(j)};
      const auto& js = f.joints[j];
      if (js.kind == JointKind::Actuated) {
        s.full[model.full_index(ref)] = s.actuated[model.channel_of(ref)];
      } else {
        const double drv = s.actuated[model.channel_of(js.driver)];
        s.full[model.full_index(ref)] = driven_angle(f, js, drv);
      }
    }
  }
  return s;
}

std::vector<LimitViolation> check_limits(const HandModel& model, const ActuatedVector& actuated) {
  std::vector<LimitViolation> out;
  for (int c = 0; c < kActuatedJoints; ++c) {
    const auto& spec = model.channel_spec(c);
    if (!std::isfinite(actuated[c]) || !spec.limits.contains(actuated[c])) {
      out.push_back({c, spec.id, actuated[c], spec.limits});
    }
  }
  return out;
}

HandModel parse_hand_model(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hand model: ") + e.what());
  }
  const json& version = member(doc, "format_version", "model");
  if (!version.is_number_integer() || version.get<int>() != kFormatVersion) {
    throw ValidationError("format_version", "unsupported (expected " + std::to_string(kFormatVersion) + ")");
  }
  const std::string name = text(doc, "name", "model");

  const json& jfingers = member(doc, "fingers", "model");
  if (!jfingers.is_array()) throw ParseError("fingers: expected array");
  if (jfingers.size() != kFingers) {
    throw ValidationError("fingers", "expected 5 fingers, found " + std::to_string(jfingers.size()));
  }
  std::array<FingerModel, kFingers> fingers;
  std::array<bool, kFingers> seen{};
  for (std::size_t i = 0; i < jfingers.size(); ++i) {
    FingerModel f = parse_finger(jfingers[i], "fingers[" + std::to_string(i) + "]");
    const int fi = static_cast<int>(f.name);
    if (seen[fi]) throw ValidationError("fingers[" + std::to_string(i) + "].name", "finger listed twice");
    seen[fi] = true;
    fingers[fi] = std::move(f);
  }

  const json& jwire = member(doc, "wire_map", "model");
  if (!jwire.is_object()) throw ParseError("wire_map: expected object");
  std::map<std::string, int> wire;
  for (auto it = jwire.begin(); it != jwire.end(); ++it) {
    if (!it.value().is_number_integer()) throw ParseError("wire_map." + it.key() + ": expected integer channel");
    wire[it.key()] = it.value().get<int>();
  }
  return HandModel(name, std::move(fingers), std::move(wire));
}

HandModel load_hand_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open hand model " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_hand_model(ss.str());
}

std::string serialize_hand_model(const HandModel& model) {
  json doc;
  doc["format_version"] = kFormatVersion;
  doc["name"] = model.name();
  json fingers = json::array();
  for (const auto& f : model.fingers()) {
    json jf;
    jf["name"] = to_string(f.name);
    json rot = json::array();
    for (int r = 0; r < 3; ++r) rot.push_back(to_json(f.root.rotation.row(r).transpose()));
    jf["root"] = {{"rotation", rot}, {"translation", to_json(f.root.translation)}};
    json segs = json::array();
    for (const auto& s : f.segments) segs.push_back({{"id", s.id}, {"length", s.length}});
    jf["segments"] = segs;
    json joints = json::array();
    for (const auto& j : f.joints) {
      json jj;
      jj["id"] = j.id;
      jj["kind"] = kind_name(j.kind);
      jj["axis"] = to_json(j.axis);
      jj["limits"] = json::array({j.limits.min, j.limits.max});
      jj["parent_segment"] = j.parent_segment;
      if (!j.driver.empty()) jj["driver"] = j.driver;
      if (j.kind == JointKind::FixedRatio) jj["ratio"] = j.ratio;
      if (j.actuation) {
        jj["actuation"] = {{"joint_pulley_radius", j.actuation->joint_pulley_radius},
                           {"servo_pulley_radius", j.actuation->servo_pulley_radius},
                           {"servo_torque_limit", j.actuation->servo_torque_limit}};
      }
      joints.push_back(jj);
    }
    jf["joints"] = joints;
    if (f.coupling) jf["coupling"] = {{"l1", f.coupling->l1()}, {"l2", f.coupling->l2()}};
    fingers.push_back(jf);
  }
  doc["fingers"] = fingers;
  json wire = json::object();
  for (const auto& [id, ch] : model.wire_map()) wire[id] = ch;
  doc["wire_map"] = wire;
  return doc.dump(2) + "\n";
}

std::string data_path(const std::string& file) { return std::string(HANDTWIN_DATA_DIR) + "/" + file; }

std::string default_model_path() {
  if (const char* env = std::getenv("HANDTWIN_MODEL"); env != nullptr && *env != '\0') return env;
  return data_path("default_hand.json");
}

HandModel load_model_or_default(const std::string& path_or_default) {
  if (path_or_default.empty() || path_or_default == "default") return load_hand_model(default_model_path());
  return load_hand_model(path_or_default);
}

ActuatedVector actuated_from_named(const HandModel& model, const std::map<std::string, double>& named,
                                   const std::string& context) {
  ActuatedVector q = ActuatedVector::Zero();
  for (const auto& [id, value] : named) {
    auto it = model.wire_map().find(id);
    if (it == model.wire_map().end()) throw ValidationError(context + "." + id, "not an actuated joint");
    q[it->second] = value;
  }
  return q;
}

}  // namespace handtwin
