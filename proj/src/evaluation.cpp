#include "handtwin/evaluation.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "handtwin/error.hpp"
#include "json.hpp"

namespace handtwin {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json parse_document(const std::string& text, const char* what) {
  try {
    json doc = json::parse(text);
    if (!doc.is_object()) throw ParseError(std::string(what) + ": expected a JSON object");
    const auto v = doc.find("format_version");
    if (v == doc.end() || !v->is_number_integer() || v->get<int>() != 1) {
      throw ValidationError("format_version", std::string(what) + " must declare format_version 1");
    }
    return doc;
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(what) + ": " + e.what());
  }
}

std::map<std::string, double> named_angles(const json& j, const std::string& path) {
  if (!j.is_object()) throw ParseError(path + ": expected {joint_id: rad}");
  std::map<std::string, double> out;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number()) throw ParseError(path + "." + it.key() + ": expected number");
    out[it.key()] = it.value().get<double>();
  }
  return out;
}

json vec_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

json grasp_json(const HandModel& model, const GraspReport& r) {
  json poses = json::array();
  for (const auto& p : r.poses) {
    json jv = json::array();
    for (const auto& v : p.violations) {
      jv.push_back({{"joint", v.joint_id}, {"channel", v.channel}, {"value", v.value},
                    {"limits", json::array({v.limits.min, v.limits.max})}});
    }
    json tips = json::object();
    for (FingerName f : kAllFingers) tips[to_string(f)] = vec_json(p.tips[static_cast<int>(f)]);
    json full = json::object();
    for (int i = 0; i < kTotalJoints; ++i) full[model.joint(model.full_joint(i)).id] = p.full[i];
    poses.push_back({{"id", p.id}, {"name", p.name}, {"valid", p.valid}, {"violations", jv},
                     {"fingertips", tips}, {"joints", full}});
  }
  return {{"kind", "grasp"}, {"valid_count", r.valid_count}, {"total", r.poses.size()}, {"poses", poses}};
}

json kapandji_json(const HandModel& model, const KapandjiReport& r) {
  json positions = json::array();
  for (const auto& p : r.positions) {
    json thumb = json::object();
    for (int ch : model.finger_channels(FingerName::Thumb)) {
      thumb[model.channel_spec(ch).id] = p.thumb_solution[ch];
    }
    positions.push_back({{"index", p.index}, {"label", p.label}, {"reachable", p.reachable},
                         {"residual", p.residual}, {"anchor", vec_json(p.anchor_world)}, {"thumb", thumb}});
  }
  return {{"kind", "kapandji"}, {"score", r.score}, {"out_of", r.positions.size()},
          {"tolerance", r.tolerance}, {"positions", positions}};
}

}  // namespace

std::vector<GraspPose> parse_grasp_library(const HandModel& model, const std::string& json_text) {
  const json doc = parse_document(json_text, "grasp library");
  const auto poses = doc.find("poses");
  if (poses == doc.end() || !poses->is_array()) throw ParseError("grasp library: 'poses' array missing");
  std::vector<GraspPose> out;
  for (std::size_t i = 0; i < poses->size(); ++i) {
    const json& jp = (*poses)[i];
    const std::string path = "poses[" + std::to_string(i) + "]";
    if (!jp.is_object() || !jp.contains("id") || !jp["id"].is_number_integer()) {
      throw ParseError(path + ": integer 'id' required");
    }
    GraspPose p;
    p.id = jp["id"].get<int>();
    p.name = jp.value("name", std::string{});
    p.notes = jp.value("notes", std::string{});
    if (jp.contains("actuated")) {
      p.actuated = actuated_from_named(model, named_angles(jp["actuated"], path + ".actuated"), path + ".actuated");
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GraspPose> load_grasp_library(const HandModel& model, const std::string& path) {
  return parse_grasp_library(model, read_file(path));
}

std::string default_grasp_library_path() { return data_path("grasp_library.json"); }

GraspReport validate_grasp_library(const HandModel& model, const std::vector<GraspPose>& library) {
  if (library.empty()) throw ValidationError("library", "grasp library is empty");
  std::set<int> ids;
  for (const auto& p : library) {
    if (!ids.insert(p.id).second) throw ValidationError("library", "duplicate grasp id " + std::to_string(p.id));
  }
  GraspReport report;
  for (const auto& p : library) {
    GraspVerdict v;
    v.id = p.id;
    v.name = p.name;
    v.violations = check_limits(model, p.actuated);
    v.valid = v.violations.empty();
    if (p.actuated.allFinite()) {
      const JointState s = resolve_full_state(model, p.actuated);
      v.full = s.full;
      v.tips = forward_kinematics(model, s).tips;
    } else {
      v.full.setConstant(std::numeric_limits<double>::quiet_NaN());
      v.tips.fill(Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN()));
    }
    report.valid_count += v.valid ? 1 : 0;
    report.poses.push_back(std::move(v));
  }
  return report;
}

KapandjiTargetSet parse_kapandji_targets(const HandModel& model, const std::string& json_text) {
  const json doc = parse_document(json_text, "kapandji targets");
  KapandjiTargetSet set;
  if (doc.contains("tolerance")) {
    if (!doc["tolerance"].is_number()) throw ParseError("tolerance: expected number");
    set.tolerance = doc["tolerance"].get<double>();
  }
  const auto targets = doc.find("targets");
  if (targets == doc.end() || !targets->is_array()) throw ParseError("kapandji targets: 'targets' array missing");
  for (std::size_t i = 0; i < targets->size(); ++i) {
    const json& jt = (*targets)[i];
    const std::string path = "targets[" + std::to_string(i) + "]";
    if (!jt.is_object() || !jt.contains("index") || !jt["index"].is_number_integer()) {
      throw ParseError(path + ": integer 'index' required");
    }
    KapandjiTarget t;
    t.index = jt["index"].get<int>();
    t.label = jt.value("label", std::string{});
    if (!jt.contains("anchor") || !jt["anchor"].is_object()) throw ParseError(path + ".anchor: object required");
    const json& ja = jt["anchor"];
    try {
      t.anchor.finger = finger_from_string(ja.at("finger").get<std::string>());
      t.anchor.segment = ja.at("segment").get<std::string>();
      const json& off = ja.at("offset");
      if (!off.is_array() || off.size() != 3) throw ParseError(path + ".anchor.offset: expected 3 numbers");
      t.anchor.offset = {off[0].get<double>(), off[1].get<double>(), off[2].get<double>()};
    } catch (const json::exception& e) {
      throw ParseError(path + ".anchor: " + e.what());
    }
    if (t.anchor.finger == FingerName::Thumb) throw ValidationError(path + ".anchor.finger", "anchor must be on an opposing finger");
    model.finger(t.anchor.finger).segment_index(t.anchor.segment);
    if (jt.contains("posture")) {
      t.posture = actuated_from_named(model, named_angles(jt["posture"], path + ".posture"), path + ".posture");
      for (int ch : model.finger_channels(FingerName::Thumb)) {
        if (t.posture[ch] != 0.0) {
          throw ValidationError(path + ".posture." + model.channel_spec(ch).id, "posture may not set thumb joints");
        }
      }
    }
    set.targets.push_back(std::move(t));
  }
  return set;
}

KapandjiTargetSet load_kapandji_targets(const HandModel& model, const std::string& path) {
  return parse_kapandji_targets(model, read_file(path));
}

std::string default_kapandji_targets_path() { return data_path("kapandji_targets.json"); }

std::vector<ActuatedVector> thumb_seed_set(const HandModel& model) {
  const std::vector<int> channels = model.finger_channels(FingerName::Thumb);
  std::vector<ActuatedVector> seeds;
  // Rest pose (clamped), then a 3-level grid over the thumb joints at 20/50/80 % of range.
  seeds.push_back(model.clamp(ActuatedVector::Zero()));
  const double levels[] = {0.2, 0.5, 0.8};
  const int n = int(channels.size());
  int combos = 1;
  for (int i = 0; i < n; ++i) combos *= 3;
  for (int m = 0; m < combos; ++m) {
    ActuatedVector q = seeds.front();
    int code = m;
    for (int i = 0; i < n; ++i) {
      const Limits& lim = model.channel_limits(channels[i]);
      q[channels[i]] = lim.min + levels[code % 3] * lim.span();
      code /= 3;
    }
    seeds.push_back(q);
  }
  return seeds;
}

KapandjiReport run_kapandji(const HandModel& model, const std::vector<KapandjiTarget>& targets, double tol,
                            const IkOptions& ik) {
  if (!(tol >= 0.0)) throw ValidationError("tolerance", "must be >= 0");
  if (int(targets.size()) != kKapandjiPositions) {
    throw ValidationError("targets", "expected 11 Kapandji targets, found " + std::to_string(targets.size()));
  }
  std::vector<const KapandjiTarget*> by_index(kKapandjiPositions, nullptr);
  for (const auto& t : targets) {
    if (t.index < 0 || t.index >= kKapandjiPositions) {
      throw ValidationError("targets", "index " + std::to_string(t.index) + " outside 0..10");
    }
    if (by_index[t.index] != nullptr) throw ValidationError("targets", "index " + std::to_string(t.index) + " repeated");
    by_index[t.index] = &t;
  }

  const std::vector<int> thumb = model.finger_channels(FingerName::Thumb);
  const std::vector<ActuatedVector> seeds = thumb_seed_set(model);

  KapandjiReport report;
  report.tolerance = tol;
  for (int i = 0; i < kKapandjiPositions; ++i) {
    const KapandjiTarget& t = *by_index[i];
    ActuatedVector posture = t.posture;
    for (int ch : thumb) posture[ch] = model.channel_limits(ch).clamp(0.0);
    if (const auto bad = check_limits(model, posture); !bad.empty()) {
      throw ValidationError("targets[" + std::to_string(i) + "].posture." + bad.front().joint_id, "outside joint limits");
    }

    KapandjiPosition pos;
    pos.index = t.index;
    pos.label = t.label;
    const JointState posed = resolve_full_state(model, posture);
    pos.anchor_world = segment_point(model, posed, t.anchor.finger, t.anchor.segment, t.anchor.offset);

    double best = std::numeric_limits<double>::infinity();
    for (const ActuatedVector& seed : seeds) {
      ActuatedVector q = posture;
      for (int ch : thumb) q[ch] = seed[ch];
      const IkResult r = inverse_kinematics(model, FingerName::Thumb, pos.anchor_world, resolve_full_state(model, q), ik);
      if (r.residual < best) {
        best = r.residual;
        pos.thumb_solution = r.state.actuated;
      }
    }
    pos.residual = best;
    pos.reachable = best <= tol;
    report.score += pos.reachable ? 1 : 0;
    report.positions.push_back(std::move(pos));
  }
  return report;
}

std::string emit_evaluation_report(const HandModel& model, const std::vector<EvaluationReport>& reports) {
  if (reports.empty()) throw ValidationError("reports", "nothing to report");
  json out;
  out["schema_version"] = kReportSchemaVersion;
  out["model"] = model.name();
  json list = json::array();
  for (const auto& r : reports) {
    if (const auto* g = std::get_if<GraspReport>(&r)) {
      if (g->poses.empty()) throw ValidationError("reports", "grasp report has no poses");
      list.push_back(grasp_json(model, *g));
    } else {
      const auto& k = std::get<KapandjiReport>(r);
      if (k.positions.empty()) throw ValidationError("reports", "kapandji report has no positions");
      list.push_back(kapandji_json(model, k));
    }
  }
  out["reports"] = list;
  return out.dump(2) + "\n";
}

}  // namespace handtwin
