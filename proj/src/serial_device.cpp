#include <fcntl.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "handtwin/error.hpp"
#include "handtwin/service.hpp"

namespace handtwin::service {

namespace {

speed_t baud_constant(int baud) {
  switch (baud) {
    case 9600: return B9600;
    case 57600: return B57600;
    case 115200: return B115200;
    case 230400: return B230400;
    case 460800: return B460800;
    case 921600: return B921600;
    default: throw ValidationError("baud", "unsupported baud rate " + std::to_string(baud));
  }
}

}  // namespace

SerialDevice::SerialDevice(const HandModel& model, const std::string& path, int baud)
    : model_(&model), path_(path) {
  fd_ = ::open(path.c_str(), O_RDWR | O_NOCTTY | O_NONBLOCK);
  if (fd_ < 0) throw IoError("cannot open serial device " + path + ": " + std::strerror(errno));
  termios tio{};
  if (::tcgetattr(fd_, &tio) == 0) {
    ::cfmakeraw(&tio);
    ::cfsetispeed(&tio, baud_constant(baud));
    ::cfsetospeed(&tio, baud_constant(baud));
    tio.c_cflag |= CLOCAL | CREAD;
    ::tcsetattr(fd_, TCSANOW, &tio);
  }  // not a tty (e.g. a FIFO in tests): write raw bytes anyway
  state_ = model.clamp(ActuatedVector::Zero());
}

SerialDevice::~SerialDevice() {
  if (fd_ >= 0) ::close(fd_);
}

void SerialDevice::send(std::span<const std::uint8_t> frame) {
  std::size_t written = 0;
  while (written < frame.size()) {
    const ssize_t n = ::write(fd_, frame.data() + written, frame.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      if (errno == EAGAIN) break;  // device busy: drop the rest of this frame, the next period resends
      throw IoError("serial write failed: " + std::string(std::strerror(errno)));
    }
    written += std::size_t(n);
  }
  // Open loop: the reported state is the last command that left intact.
  if (written == frame.size()) {
    for (const auto& f : echo_.feed(frame)) {
      if (const auto* cmd = std::get_if<protocol::JointCommand>(&f)) pending_ = protocol::from_ticks(*model_, cmd->ticks);
    }
  }
}

void SerialDevice::advance(double) {
  if (pending_) {
    state_ = *pending_;
    pending_.reset();
  }
}

}  // namespace handtwin::service
