#pragma once

#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "handtwin/control.hpp"
#include "handtwin/evaluation.hpp"

namespace handtwin::service {

inline constexpr int kSchemaVersion = 1;

/**
 * Websocket message schema (JSON text frames, schema_version 1).
 *
 * Inbound:
 *   {"type":"set_joint","channel":3,"rad":0.8}
 *   {"type":"set_mode","mode":"joint_level"|"task_based"|"shadow","params":{...}}
 *       joint_level params: {"targets":[16]}            (optional)
 *       task_based params:  {"target":[16]} or {"grasp":id}, plus {"duration":s}
 *   {"type":"grasp","id":1,"duration":2.0}
 *   {"type":"landmarks","timestamp":t,"points":[63 numbers]}
 * Outbound:
 *   hello  - once per connection: model name, channel table, rates
 *   state  - periodic: time, mode, actuated[16], command[16], full[21],
 *            tips{finger:[3]}, skeleton{finger:[[3]...]}, limits_hit[16],
 *            task_progress, grasp_id
 *   ack / error - replies to inbound messages; errors carry schema_version
 */
class MessageRouter {
 public:
  MessageRouter(control::HandController& controller, std::vector<GraspPose> grasps);

  /// Applies one inbound message and returns the reply text.
  std::string handle(const std::string& text);

  std::string hello_message() const;
  std::string state_message() const;

  static std::string error_message(const std::string& what);

 private:
  control::HandController* controller_;
  std::vector<GraspPose> grasps_;
};

/// Serial port device: writes protocol frames to a tty; state echoes the last command.
class SerialDevice : public control::Device {
 public:
  SerialDevice(const HandModel& model, const std::string& path, int baud = 115200);
  ~SerialDevice() override;
  SerialDevice(const SerialDevice&) = delete;
  SerialDevice& operator=(const SerialDevice&) = delete;

  void send(std::span<const std::uint8_t> frame) override;
  void advance(double dt) override;
  ActuatedVector state() const override { return state_; }
  std::string describe() const override { return "serial:" + path_; }

 private:
  const HandModel* model_;
  std::string path_;
  int fd_ = -1;
  protocol::FrameDecoder echo_;
  std::optional<ActuatedVector> pending_;
  ActuatedVector state_;
};

struct ServiceConfig {
  std::string address = "127.0.0.1";
  unsigned short port = 8765;  // 0 picks a free port
  std::string static_dir;      // served over plain HTTP GET when set
};

/**
 * Websocket front end for a HandController. Runs the control loop timer,
 * the state broadcast timer and every connection on one io_context thread,
 * so the controller has a single writer.
 */
class WsServer {
 public:
  /// Binds immediately; throws IoError when the port is unavailable.
  WsServer(control::HandController& controller, MessageRouter& router, ServiceConfig cfg);
  ~WsServer();

  unsigned short port() const;
  /// Blocks until stop().
  void run();
  /// Thread-safe.
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace handtwin::service
