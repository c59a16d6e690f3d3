#include "handtwin/service.hpp"

#include <algorithm>

#include "handtwin/error.hpp"
#include "json.hpp"

namespace handtwin::service {

using nlohmann::json;

namespace {

json vec(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename V>
json array_of(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

ActuatedVector actuated_from(const json& j, const char* field) {
  if (!j.is_array() || j.size() != kActuatedJoints) {
    throw ParseError(std::string(field) + ": expected an array of 16 numbers");
  }
  ActuatedVector q;
  for (int i = 0; i < kActuatedJoints; ++i) {
    if (!j[i].is_number()) throw ParseError(std::string(field) + ": expected numbers");
    q[i] = j[i].get<double>();
  }
  return q;
}

double number_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number()) throw ParseError(std::string("'") + key + "' must be a number");
  return j[key].get<double>();
}

int int_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_integer()) throw ParseError(std::string("'") + key + "' must be an integer");
  return j[key].get<int>();
}

json ack(const std::string& what) { return {{"type", "ack"}, {"schema_version", kSchemaVersion}, {"for", what}}; }

}  // namespace

MessageRouter::MessageRouter(control::HandController& controller, std::vector<GraspPose> grasps)
    : controller_(&controller), grasps_(std::move(grasps)) {}

std::string MessageRouter::error_message(const std::string& what) {
  return json{{"type", "error"}, {"schema_version", kSchemaVersion}, {"message", what}}.dump();
}

std::string MessageRouter::handle(const std::string& text) {
  try {
    json msg;
    try {
      msg = json::parse(text);
    } catch (const json::parse_error&) {
      throw ParseError("message is not valid JSON");
    }
    if (!msg.is_object() || !msg.contains("type") || !msg["type"].is_string()) {
      throw ParseError("message needs a string 'type'");
    }
    if (msg.contains("schema_version") && msg["schema_version"] != kSchemaVersion) {
      throw ValidationError("schema_version", "unsupported schema version");
    }
    const std::string type = msg["type"];
    auto& ctl = *controller_;

    auto start_grasp = [&](int id, double duration) {
      auto it = std::find_if(grasps_.begin(), grasps_.end(), [&](const GraspPose& g) { return g.id == id; });
      if (it == grasps_.end()) throw ValidationError("id", "unknown grasp id " + std::to_string(id));
      ctl.start_task(it->actuated, duration, id);
    };

    if (type == "set_joint") {
      ctl.set_joint(int_field(msg, "channel"), number_field(msg, "rad"));
    } else if (type == "grasp") {
      start_grasp(int_field(msg, "id"), msg.contains("duration") ? number_field(msg, "duration") : 2.0);
    } else if (type == "landmarks") {
      const json& pts = msg.contains("points") ? msg["points"] : json();
      if (!pts.is_array() || pts.size() != 3 * kLandmarkCount) throw ParseError("'points' must hold 63 numbers");
      LandmarkFrame frame;
      frame.timestamp = number_field(msg, "timestamp");
      for (int i = 0; i < kLandmarkCount; ++i) {
        for (int a = 0; a < 3; ++a) {
          if (!pts[3 * i + a].is_number()) throw ParseError("'points' must hold 63 numbers");
          frame.points[i][a] = pts[3 * i + a].get<double>();
        }
      }
      ctl.push_landmarks(frame);
    } else if (type == "set_mode") {
      if (!msg.contains("mode") || !msg["mode"].is_string()) throw ParseError("'mode' must be a string");
      const std::string mode = msg["mode"];
      const json params = msg.contains("params") ? msg["params"] : json::object();
      if (!params.is_object()) throw ParseError("'params' must be an object");
      if (mode == "joint_level") {
        ctl.set_joint_targets(params.contains("targets") ? actuated_from(params["targets"], "targets") : ctl.command());
      } else if (mode == "task_based") {
        const double duration = params.contains("duration") ? number_field(params, "duration") : 2.0;
        if (params.contains("grasp")) {
          start_grasp(int_field(params, "grasp"), duration);
        } else if (params.contains("target")) {
          ctl.start_task(actuated_from(params["target"], "target"), duration);
        } else {
          throw ParseError("task_based needs 'grasp' or 'target'");
        }
      } else if (mode == "shadow") {
        ctl.enter_shadow();
      } else {
        throw ValidationError("mode", "unknown mode '" + mode + "'");
      }
    } else {
      throw ValidationError("type", "unknown message type '" + type + "'");
    }
    return ack(type).dump();
  } catch (const HandError& e) {
    return error_message(e.what());
  }
}

std::string MessageRouter::hello_message() const {
  const HandModel& model = controller_->model();
  json channels = json::array();
  for (int c = 0; c < kActuatedJoints; ++c) {
    const auto& spec = model.channel_spec(c);
    channels.push_back({{"channel", c}, {"joint", spec.id}, {"limits", json::array({spec.limits.min, spec.limits.max})}});
  }
  json grasps = json::array();
  for (const auto& g : grasps_) grasps.push_back({{"id", g.id}, {"name", g.name}});
  return json{{"type", "hello"},
              {"schema_version", kSchemaVersion},
              {"model", model.name()},
              {"channels", channels},
              {"grasps", grasps},
              {"control_period", controller_->config().period},
              {"broadcast_rate", controller_->config().broadcast_rate}}
      .dump();
}

std::string MessageRouter::state_message() const {
  const HandModel& model = controller_->model();
  const control::StateSnapshot s = controller_->snapshot();
  json tips = json::object();
  json skeleton = json::object();
  for (FingerName f : kAllFingers) {
    const int fi = static_cast<int>(f);
    tips[to_string(f)] = vec(s.fk.tips[fi]);
    json pts = json::array();
    for (const auto& p : s.fk.fingers[fi].skeleton_points(model.finger(f).root)) pts.push_back(vec(p));
    skeleton[to_string(f)] = pts;
  }
  json limits = json::array();
  for (bool b : s.limits_hit) limits.push_back(b);
  return json{{"type", "state"},
              {"schema_version", kSchemaVersion},
              {"time", s.time},
              {"mode", s.mode},
              {"actuated", array_of(s.state.actuated)},
              {"command", array_of(s.command)},
              {"full", array_of(s.state.full)},
              {"tips", tips},
              {"skeleton", skeleton},
              {"limits_hit", limits},
              {"task_progress", s.task_progress},
              {"grasp_id", s.grasp_id}}
      .dump();
}

}  // namespace handtwin::service
