// handtwin command-line entry point.
//
// Exit codes: 0 success, 1 bad input (parse/validation/domain errors, invalid
// poses), 2 runtime failure (I/O, IK non-convergence under --strict).

#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "handtwin/control.hpp"
#include "handtwin/error.hpp"
#include "handtwin/evaluation.hpp"
#include "handtwin/kinematics.hpp"
#include "handtwin/linkage.hpp"
#include "handtwin/retarget.hpp"
#include "handtwin/service.hpp"
#include "json.hpp"

using namespace handtwin;
using nlohmann::json;

namespace {

struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string model = "default";
  std::string output;
  std::uint64_t seed = 0;
};

json vec3(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

template <typename V>
json array_of(const V& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

std::string fmt(double v, int precision = 6) {
  std::ostringstream s;
  s.precision(precision);
  s << v;
  return s.str();
}

std::string fmt3(const Eigen::Vector3d& v, const char* unit) {
  return "(" + fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()) + ") " + unit;
}

void write_output(const Globals& g, const std::string& text) {
  if (g.output.empty()) return;
  std::ofstream out(g.output, std::ios::binary);
  if (!out) throw IoError("cannot write " + g.output);
  out << text;
  if (!out) throw IoError("write failed: " + g.output);
}

void write_json(const Globals& g, const json& doc) { write_output(g, doc.dump(2) + "\n"); }

Eigen::Vector3d parse_vec3(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw ParseError(std::string(what) + ": expected three numbers");
  return {v[0], v[1], v[2]};
}

// Pose from --pose (rest | grasp id) with --joint id=rad overrides.
ActuatedVector build_pose(const HandModel& model, const std::string& pose, const std::vector<std::string>& joints) {
  ActuatedVector q = model.clamp(ActuatedVector::Zero());
  if (pose != "rest") {
    int id = 0;
    try {
      std::size_t used = 0;
      id = std::stoi(pose, &used);
      if (used != pose.size()) throw std::invalid_argument(pose);
    } catch (const std::exception&) {
      throw ParseError("--pose: expected 'rest' or a grasp id, got '" + pose + "'");
    }
    const auto lib = load_grasp_library(model, default_grasp_library_path());
    auto it = std::find_if(lib.begin(), lib.end(), [&](const GraspPose& p) { return p.id == id; });
    if (it == lib.end()) throw ValidationError("--pose", "unknown grasp id " + pose);
    q = it->actuated;
  }
  std::map<std::string, double> named;
  for (const auto& j : joints) {
    const auto eq = j.find('=');
    if (eq == std::string::npos) throw ParseError("--joint: expected id=rad, got '" + j + "'");
    try {
      named[j.substr(0, eq)] = std::stod(j.substr(eq + 1));
    } catch (const std::exception&) {
      throw ParseError("--joint: bad number in '" + j + "'");
    }
  }
  const ActuatedVector overrides = actuated_from_named(model, named, "--joint");
  for (const auto& [id, v] : named) q[model.channel_of(id)] = overrides[model.channel_of(id)];
  return q;
}

json state_json(const HandModel& model, const JointState& s) {
  const FingertipSet fk = forward_kinematics(model, s);
  json tips = json::object(), joints = json::object();
  for (FingerName f : kAllFingers) tips[to_string(f)] = vec3(fk.tip(f));
  for (const auto& finger : model.fingers()) {
    for (std::size_t j = 0; j < finger.joints.size(); ++j) {
      joints[finger.joints[j].id] = s.full[model.full_index({int(&finger - &model.fingers()[0]), int(j)})];
    }
  }
  return {{"actuated", array_of(s.actuated)}, {"joints_rad", joints}, {"tips_m", tips}};
}

// ---------------------------------------------------------------------------

int cmd_fit_linkage(const Globals& g, const std::string& target, double l_sum) {
  const TrajectoryTable table = TrajectoryTable::from_csv(target);
  const LinkageFit fit = synthesize_linkage(table, l_sum);
  std::cout << "k = " << fmt(fit.linkage.k(), 9) << "\n"
            << "l1 = " << fmt(fit.linkage.l1(), 9) << " m\n"
            << "l2 = " << fmt(fit.linkage.l2(), 9) << " m\n"
            << "rms = " << fmt(fit.rms, 6) << " rad over " << table.size() << " samples\n";
  if (fit.grid_fallback) std::cout << "note: optimum on the k search boundary\n";
  write_json(g, {{"schema_version", 1},
                 {"k", fit.linkage.k()},
                 {"l1_m", fit.linkage.l1()},
                 {"l2_m", fit.linkage.l2()},
                 {"rms_rad", fit.rms},
                 {"residuals_rad", fit.residuals},
                 {"newton_iterations", fit.newton_iterations},
                 {"grid_fallback", fit.grid_fallback}});
  return 0;
}

int cmd_fk(const Globals& g, const HandModel& model, const std::string& pose, const std::vector<std::string>& joints) {
  const JointState s = resolve_full_state(model, build_pose(model, pose, joints));
  const FingertipSet fk = forward_kinematics(model, s);
  for (FingerName f : kAllFingers) std::cout << to_string(f) << " tip " << fmt3(fk.tip(f), "m") << "\n";
  json doc = state_json(model, s);
  doc["schema_version"] = 1;
  doc["pose"] = pose;
  write_json(g, doc);
  return 0;
}

struct IkArgs {
  std::string finger = "index";
  std::vector<double> target;
  std::string pose = "rest";
  std::vector<std::string> joints;
  double damping = IkOptions{}.damping;
  int max_iters = IkOptions{}.max_iters;
  double tol = IkOptions{}.tol;
  int random_starts = 0;
  bool strict = false;
};

int cmd_ik(const Globals& g, const HandModel& model, const IkArgs& a) {
  const FingerName finger = finger_from_string(a.finger);
  const Eigen::Vector3d target = parse_vec3(a.target, "--target");
  IkOptions opts;
  opts.damping = a.damping;
  opts.max_iters = a.max_iters;
  opts.tol = a.tol;

  const ActuatedVector start = build_pose(model, a.pose, a.joints);
  IkResult best = inverse_kinematics(model, finger, target, resolve_full_state(model, start), opts);
  std::mt19937_64 rng(g.seed);
  for (int i = 0; i < a.random_starts && !best.converged; ++i) {
    ActuatedVector q = start;
    for (int c = 0; c < kActuatedJoints; ++c) {
      const Limits lim = model.channel_limits(c);
      q[c] = std::uniform_real_distribution<double>(lim.min, lim.max)(rng);
    }
    IkResult r = inverse_kinematics(model, finger, target, resolve_full_state(model, q), opts);
    if (r.residual < best.residual) best = std::move(r);
  }

  std::cout << (best.converged ? "converged" : "not converged") << " after " << best.iterations
            << " iterations, residual " << fmt(best.residual) << " m\n";
  std::cout << to_string(finger) << " tip " << fmt3(forward_kinematics(model, best.state).tip(finger), "m") << "\n";
  json doc = state_json(model, best.state);
  doc["schema_version"] = 1;
  doc["finger"] = to_string(finger);
  doc["target_m"] = vec3(target);
  doc["converged"] = best.converged;
  doc["iterations"] = best.iterations;
  doc["residual_m"] = best.residual;
  write_json(g, doc);
  if (a.strict && !best.converged) throw RuntimeFailure("IK did not converge within " + fmt(opts.tol) + " m");
  return 0;
}

int cmd_force(const Globals& g, const HandModel& model, const std::string& finger_name, const std::string& pose,
              const std::vector<std::string>& joints, const std::vector<double>& direction) {
  const FingerName finger = finger_from_string(finger_name);
  const JointState s = resolve_full_state(model, build_pose(model, pose, joints));
  const Eigen::Vector3d dir = parse_vec3(direction, "--direction");
  const ForceResult r = max_fingertip_force(model, s, finger, dir);
  json doc = {{"schema_version", 1}, {"finger", to_string(finger)}, {"direction", vec3(dir)}, {"bounded", r.bounded}};
  if (r.bounded) {
    const std::string limiting = model.channel_spec(r.limiting_channel).id;
    std::cout << "max force " << fmt(r.force) << " N, limited by " << limiting << "\n";
    doc["force_n"] = r.force;
    doc["limiting_joint"] = limiting;
  } else {
    std::cout << "unbounded: the direction loads no joint\n";
    doc["force_n"] = nullptr;
  }
  write_json(g, doc);
  return 0;
}

int cmd_kapandji(const Globals& g, const HandModel& model, const std::string& targets_path, double tolerance) {
  const KapandjiTargetSet set =
      load_kapandji_targets(model, targets_path.empty() ? default_kapandji_targets_path() : targets_path);
  const double tol = tolerance >= 0.0 ? tolerance : set.tolerance;
  const KapandjiReport r = run_kapandji(model, set.targets, tol);
  for (const auto& p : r.positions) {
    std::cout << "  " << p.index << " " << p.label << ": " << (p.reachable ? "reached" : "missed") << " (residual "
              << fmt(p.residual, 4) << " m)\n";
  }
  std::cout << "score " << r.score << "/" << r.positions.size() << " (tolerance " << fmt(tol) << " m)\n";
  write_output(g, emit_evaluation_report(model, {r}));
  return 0;
}

int cmd_grasp(const Globals& g, const HandModel& model, int id) {
  const auto lib = load_grasp_library(model, default_grasp_library_path());
  auto it = std::find_if(lib.begin(), lib.end(), [&](const GraspPose& p) { return p.id == id; });
  if (it == lib.end()) throw ValidationError("--id", "unknown grasp id " + std::to_string(id));
  const GraspReport r = validate_grasp_library(model, {*it});
  std::cout << "grasp " << it->id << " " << it->name << ": " << (r.poses[0].valid ? "valid" : "INVALID") << "\n";
  for (int c = 0; c < kActuatedJoints; ++c) {
    std::cout << "  " << model.channel_spec(c).id << " " << fmt(it->actuated[c]) << " rad\n";
  }
  json doc = state_json(model, resolve_full_state(model, it->actuated));
  doc["schema_version"] = 1;
  doc["id"] = it->id;
  doc["name"] = it->name;
  doc["valid"] = r.poses[0].valid;
  write_json(g, doc);
  return r.poses[0].valid ? 0 : 1;
}

int cmd_validate_poses(const Globals& g, const HandModel& model, const std::string& library_path) {
  const auto lib = load_grasp_library(model, library_path.empty() ? default_grasp_library_path() : library_path);
  const GraspReport r = validate_grasp_library(model, lib);
  for (const auto& v : r.poses) {
    if (v.valid) continue;
    std::cout << "  " << v.id << " " << v.name << ":";
    for (const auto& bad : v.violations) std::cout << " " << bad.joint_id << "=" << fmt(bad.value) << " rad";
    std::cout << "\n";
  }
  std::cout << r.valid_count << "/" << r.poses.size() << " poses valid\n";
  write_output(g, emit_evaluation_report(model, {r}));
  return r.valid_count == int(r.poses.size()) ? 0 : 1;
}

int cmd_shadow(const Globals& g, const HandModel& model, const std::string& input, RetargetConfig cfg) {
  cfg.validate();
  const auto frames = load_landmark_stream(input);
  Retargeter retarget(model, cfg);
  json out = json::array();
  std::size_t degenerate = 0;
  for (const auto& f : frames) {
    if (landmarks_to_human_angles(f).array().isNaN().any()) ++degenerate;
    if (auto q = retarget.process(f)) out.push_back({{"timestamp_s", f.timestamp}, {"actuated", array_of(*q)}});
  }
  const auto& d = retarget.diagnostics();
  std::cout << frames.size() << " frames read, " << d.accepted << " retargeted, " << d.dropped_non_increasing
            << " dropped (non-increasing time), " << degenerate << " with degenerate landmarks\n";
  json channels = json::array();
  for (int c = 0; c < kActuatedJoints; ++c) channels.push_back(model.channel_spec(c).id);
  write_json(g, {{"schema_version", 1},
                 {"channels", channels},
                 {"frames", out},
                 {"dropped_non_increasing", d.dropped_non_increasing},
                 {"degenerate_frames", degenerate}});
  return 0;
}

struct ServeArgs {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;
  double period = 0.02;
  double broadcast_rate = 30.0;
  double max_velocity = 10.0;
  std::string device = "loopback";
  double lag = 0.0;
  std::string static_dir;
  double duration = 0.0;
};

int cmd_serve(const Globals&, const HandModel& model, const ServeArgs& a, const RetargetConfig& rcfg) {
  control::ControlConfig cfg;
  cfg.period = a.period;
  cfg.broadcast_rate = a.broadcast_rate;
  cfg.max_velocity = a.max_velocity;
  std::unique_ptr<control::Device> device;
  if (a.device == "loopback") {
    device = std::make_unique<control::LoopbackDevice>(model, a.lag);
  } else {
    device = std::make_unique<service::SerialDevice>(model, a.device);
  }
  control::HandController controller(model, cfg, rcfg, std::move(device));
  service::MessageRouter router(controller, load_grasp_library(model, default_grasp_library_path()));

  // Signals are handled by a dedicated thread so stop() is not called from a handler.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  service::WsServer server(controller, router, {a.address, a.port, a.static_dir});
  std::cout << "listening on ws://" << a.address << ":" << server.port() << " (device "
            << controller.device().describe() << ", period " << fmt(a.period) << " s)" << std::endl;

  std::atomic<bool> watcher_done{false};
  std::thread watcher([&] {
    if (a.duration > 0.0) {
      timespec ts{static_cast<time_t>(a.duration), static_cast<long>((a.duration - std::floor(a.duration)) * 1e9)};
      sigtimedwait(&signals, nullptr, &ts);
    } else {
      int sig = 0;
      sigwait(&signals, &sig);
    }
    watcher_done = true;
    server.stop();
  });
  server.run();
  // run() can also end on its own; make sure the watcher wakes up.
  if (!watcher_done) pthread_kill(watcher.native_handle(), SIGTERM);
  watcher.join();
  std::cout << "stopped after " << controller.diagnostics().steps << " control steps" << std::endl;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"handtwin: kinematic model, evaluation and teleoperation service for a tendon-driven hand"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--model", g.model, "Hand description file, or 'default' (HANDTWIN_MODEL overrides the default)")
      ->capture_default_str();
  app.add_option("--output", g.output, "Write machine-readable results (JSON) to this path");
  app.add_option("--seed", g.seed, "Seed for any randomised search")->capture_default_str();

  // fit-linkage
  std::string fit_target;
  double l_sum = 0.05;
  auto* fit = app.add_subcommand("fit-linkage", "Fit an anti-parallelogram to a PIP/DIP curve (CSV pip_rad,dip_rad)");
  fit->add_option("--target", fit_target, "Target curve CSV")->required();
  fit->add_option("--l-sum", l_sum, "Fixed l1 + l2 in metres")->capture_default_str();

  // fk
  std::string pose = "rest";
  std::vector<std::string> joint_overrides;
  auto* fk = app.add_subcommand("fk", "Forward kinematics: fingertip positions for a pose");
  fk->add_option("--pose", pose, "'rest' or a grasp library id")->capture_default_str();
  fk->add_option("--joint", joint_overrides, "Override an actuated joint, id=rad (repeatable)");

  // ik
  IkArgs ik_args;
  auto* ik = app.add_subcommand("ik", "Inverse kinematics for one fingertip");
  ik->add_option("--finger", ik_args.finger, "thumb|index|middle|ring|little")->capture_default_str();
  ik->add_option("--target", ik_args.target, "Target x y z in the palm frame, metres")->required()->expected(3);
  ik->add_option("--pose", ik_args.pose, "Starting pose: 'rest' or a grasp id")->capture_default_str();
  ik->add_option("--joint", ik_args.joints, "Override a starting joint, id=rad (repeatable)");
  ik->add_option("--damping", ik_args.damping, "Initial damping")->capture_default_str();
  ik->add_option("--max-iters", ik_args.max_iters, "Iteration cap")->capture_default_str();
  ik->add_option("--tol", ik_args.tol, "Convergence tolerance in metres")->capture_default_str();
  ik->add_option("--random-starts", ik_args.random_starts, "Extra random starts drawn with --seed")
      ->capture_default_str();
  ik->add_flag("--strict", ik_args.strict, "Exit 2 when IK does not converge");

  // force
  std::string force_finger = "index";
  std::vector<double> direction;
  auto* force = app.add_subcommand("force", "Largest fingertip force along a direction within tendon torque limits");
  force->add_option("--finger", force_finger, "thumb|index|middle|ring|little")->capture_default_str();
  force->add_option("--pose", pose, "'rest' or a grasp library id")->capture_default_str();
  force->add_option("--joint", joint_overrides, "Override an actuated joint, id=rad (repeatable)");
  force->add_option("--direction", direction, "Unit direction x y z in the palm frame")->required()->expected(3);

  // kapandji
  std::string targets_path;
  double tolerance = -1.0;
  auto* kap = app.add_subcommand("kapandji", "Thumb opposition score over the 11 reference positions");
  kap->add_option("--targets", targets_path, "Target file (default: shipped targets)");
  kap->add_option("--tolerance", tolerance, "Reach tolerance in metres (default: from the target file)");

  // grasp
  int grasp_id = 0;
  auto* grasp = app.add_subcommand("grasp", "Show and check one grasp library pose");
  grasp->add_option("--id", grasp_id, "Grasp id (1-33)")->required();

  // validate-poses
  std::string library_path;
  auto* vp = app.add_subcommand("validate-poses", "Check every pose of a grasp library against the joint limits");
  vp->add_option("--library", library_path, "Grasp library file (default: shipped library)");

  // shadow
  std::string landmark_input;
  RetargetConfig rcfg;
  auto* shadow = app.add_subcommand("shadow", "Retarget a recorded landmark stream to robot joint commands");
  shadow->add_option("--input", landmark_input, "Landmark stream, one record per line")->required();
  for (CLI::App* sub : {shadow}) {
    sub->add_option("--alpha", rcfg.smoothing_alpha, "EMA smoothing factor in (0, 1]")->capture_default_str();
    sub->add_option("--max-joint-velocity", rcfg.max_joint_velocity, "Velocity clamp, rad/s")->capture_default_str();
    sub->add_option("--coupling-weight", rcfg.coupling_weight, "Weight of the DIP term in [0, 1]")
        ->capture_default_str();
  }

  // serve
  ServeArgs serve_args;
  auto* serve = app.add_subcommand("serve", "Run the control loop and websocket service");
  serve->add_option("--address", serve_args.address, "Bind address")->capture_default_str();
  serve->add_option("--port", serve_args.port, "TCP port (0 picks a free one)")
      ->envname("HANDTWIN_PORT")
      ->capture_default_str();
  serve->add_option("--period", serve_args.period, "Control period, s")->capture_default_str();
  serve->add_option("--broadcast-rate", serve_args.broadcast_rate, "State broadcast rate, Hz")->capture_default_str();
  serve->add_option("--max-velocity", serve_args.max_velocity, "Joint velocity limit, rad/s")->capture_default_str();
  serve->add_option("--device", serve_args.device, "'loopback' or a serial device path")
      ->envname("HANDTWIN_DEVICE")
      ->capture_default_str();
  serve->add_option("--lag", serve_args.lag, "Loopback first-order lag time constant, s")->capture_default_str();
  serve->add_option("--static-dir", serve_args.static_dir, "Directory served over HTTP GET");
  serve->add_option("--duration", serve_args.duration, "Stop after this many seconds (0 runs until SIGINT)")
      ->capture_default_str();
  serve->add_option("--alpha", rcfg.smoothing_alpha, "Shadow EMA smoothing factor")->capture_default_str();
  serve->add_option("--coupling-weight", rcfg.coupling_weight, "Shadow DIP weight")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (fit->parsed()) return cmd_fit_linkage(g, fit_target, l_sum);
    const HandModel model = load_model_or_default(g.model);
    if (fk->parsed()) return cmd_fk(g, model, pose, joint_overrides);
    if (ik->parsed()) return cmd_ik(g, model, ik_args);
    if (force->parsed()) return cmd_force(g, model, force_finger, pose, joint_overrides, direction);
    if (kap->parsed()) return cmd_kapandji(g, model, targets_path, tolerance);
    if (grasp->parsed()) return cmd_grasp(g, model, grasp_id);
    if (vp->parsed()) return cmd_validate_poses(g, model, library_path);
    if (shadow->parsed()) return cmd_shadow(g, model, landmark_input, rcfg);
    if (serve->parsed()) return cmd_serve(g, model, serve_args, rcfg);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 1;
  } catch (const ValidationError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const RuntimeFailure& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
