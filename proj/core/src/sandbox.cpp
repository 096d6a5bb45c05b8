#include "agentloop/sandbox.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstring>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "agentloop/errors.hpp"
#include "agentloop/prompts.hpp"
#include "agentloop/util.hpp"

extern char** environ;

namespace agentloop::sandbox {

using nlohmann::json;
using steady_clock = std::chrono::steady_clock;

const char* exec_status_name(ExecStatus status) {
  switch (status) {
    case ExecStatus::Ok: return "Ok";
    case ExecStatus::Error: return "Error";
    case ExecStatus::Timeout: return "Timeout";
    case ExecStatus::Killed: return "Killed";
  }
  return "?";
}

struct Session::Child {
  pid_t pid = -1;
  int stdin_fd = -1;
  int stdout_fd = -1;
  int stderr_fd = -1;
  std::string read_buffer;

  ~Child() {
    if (stdin_fd >= 0) ::close(stdin_fd);
    if (stdout_fd >= 0) ::close(stdout_fd);
    if (stderr_fd >= 0) ::close(stderr_fd);
  }
};

namespace {

constexpr std::size_t kMaxFramePayload = 256u << 20;
constexpr std::size_t kStderrTailCap = 16384;

// Frame writes hit a pipe whose reader may have died; without this the
// process would take SIGPIPE instead of seeing EPIPE.
void ignore_sigpipe_once() {
  static const bool done = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)done;
}

bool write_all(int fd, const char* data, std::size_t n) {
  while (n > 0) {
    ssize_t w = ::write(fd, data, n);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
  return true;
}

bool write_frame(int fd, const json& j) {
  std::string payload = j.dump();
  unsigned char header[4] = {
      static_cast<unsigned char>((payload.size() >> 24) & 0xff),
      static_cast<unsigned char>((payload.size() >> 16) & 0xff),
      static_cast<unsigned char>((payload.size() >> 8) & 0xff),
      static_cast<unsigned char>(payload.size() & 0xff),
  };
  return write_all(fd, reinterpret_cast<const char*>(header), 4) &&
         write_all(fd, payload.data(), payload.size());
}

// Extracts one complete frame from buf if available.  Corrupt framing is
// reported as failure so the caller treats the kernel as dead.
enum class FrameState { Incomplete, Ready, Corrupt };

FrameState take_frame(std::string& buf, json* out) {
  if (buf.size() < 4) return FrameState::Incomplete;
  std::size_t len = (static_cast<unsigned char>(buf[0]) << 24) |
                    (static_cast<unsigned char>(buf[1]) << 16) |
                    (static_cast<unsigned char>(buf[2]) << 8) |
                    static_cast<unsigned char>(buf[3]);
  if (len > kMaxFramePayload) return FrameState::Corrupt;
  if (buf.size() < 4 + len) return FrameState::Incomplete;
  json j = json::parse(buf.substr(4, len), nullptr, /*allow_exceptions=*/false);
  buf.erase(0, 4 + len);
  if (j.is_discarded()) return FrameState::Corrupt;
  *out = std::move(j);
  return FrameState::Ready;
}

std::string random_session_id() {
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  static std::mt19937_64 rng{std::random_device{}()};
  std::ostringstream out;
  out << "sbx-" << std::hex << (rng() & 0xffffffffull);
  return out.str();
}

std::string format_seconds(double seconds) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", seconds);
  return buf;
}

}  // namespace

Session::Session(std::vector<std::string> input_images_png, SandboxConfig config)
    : id_(random_session_id()),
      config_(std::move(config)),
      input_images_(std::move(input_images_png)) {
  ignore_sigpipe_once();
  if (config_.workdir.empty()) {
    workdir_ = make_temp_dir("agentloop-" + id_ + "-");
    owns_workdir_ = true;
  } else {
    workdir_ = config_.workdir;
    std::filesystem::create_directories(workdir_);
  }
  std::lock_guard<std::mutex> exec_lock(exec_mutex_);
  spawn_and_init();
}

Session::~Session() {
  try {
    close();
    std::lock_guard<std::mutex> lock(state_mutex_);
    kill_child_locked();
    if (owns_workdir_) {
      std::error_code ec;
      std::filesystem::remove_all(workdir_, ec);
    }
  } catch (...) {
  }
}

bool Session::alive() const {
  std::lock_guard<std::mutex> lock(state_mutex_);
  return !closed_ && !respawn_failed_;
}

int Session::exec_count() const {
  std::lock_guard<std::mutex> lock(state_mutex_);
  return exec_count_;
}

void Session::kill_child_locked() {
  if (!child_) return;
  if (child_->pid > 0) {
    ::kill(child_->pid, SIGKILL);
    int status = 0;
    while (::waitpid(child_->pid, &status, 0) < 0 && errno == EINTR) {
    }
  }
  child_.reset();
}

void Session::close() {
  std::lock_guard<std::mutex> lock(state_mutex_);
  if (closed_) return;
  closed_ = true;
  if (child_ && child_->pid > 0) {
    ::kill(child_->pid, SIGKILL);
    // When an execute() is mid-flight it owns the pipes and will observe the
    // EOF, reap, and clean up; otherwise reap here.
    if (!exec_in_flight_) kill_child_locked();
  }
  if (owns_workdir_ && !exec_in_flight_) {
    std::error_code ec;
    std::filesystem::remove_all(workdir_, ec);
  }
}

std::string Session::drain_child_stderr() {
  std::lock_guard<std::mutex> lock(state_mutex_);
  return stderr_tail_;
}

void Session::spawn_and_init() {
  std::vector<std::string> cmd = config_.interpreter_cmd;
  if (cmd.empty())
    cmd = {"python3", "-c", std::string(prompts::sandbox_kernel_source())};

  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) < 0 || ::pipe2(out_pipe, O_CLOEXEC) < 0 ||
      ::pipe2(err_pipe, O_CLOEXEC) < 0)
    throw Error(ErrorCode::SpawnFailure, "pipe2 failed: " + std::string(std::strerror(errno)));

  posix_spawn_file_actions_t actions;
  posix_spawn_file_actions_init(&actions);
  posix_spawn_file_actions_adddup2(&actions, in_pipe[0], 0);
  posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);
  posix_spawn_file_actions_adddup2(&actions, err_pipe[1], 2);
  posix_spawn_file_actions_addchdir_np(&actions, workdir_.c_str());

  std::vector<char*> argv;
  argv.reserve(cmd.size() + 1);
  for (auto& a : cmd) argv.push_back(a.data());
  argv.push_back(nullptr);

  // Inherit the environment but pin the knobs determinism depends on:
  // headless matplotlib, stable hashing, single-threaded BLAS.
  std::vector<std::string> env_store;
  static const char* kOverrides[] = {"MPLBACKEND=Agg", "PYTHONHASHSEED=0",
                                     "OPENBLAS_NUM_THREADS=1", "OMP_NUM_THREADS=1",
                                     "PYTHONUNBUFFERED=1"};
  for (char** e = environ; e && *e; ++e) {
    std::string_view entry(*e);
    auto name = entry.substr(0, entry.find('='));
    bool overridden = false;
    for (const char* o : kOverrides)
      if (std::string_view(o).substr(0, name.size()) == name &&
          std::string_view(o)[name.size()] == '=')
        overridden = true;
    if (!overridden) env_store.emplace_back(entry);
  }
  for (const char* o : kOverrides) env_store.emplace_back(o);
  std::vector<char*> envp;
  envp.reserve(env_store.size() + 1);
  for (auto& e : env_store) envp.push_back(e.data());
  envp.push_back(nullptr);

  pid_t pid = -1;
  int rc = ::posix_spawnp(&pid, argv[0], &actions, nullptr, argv.data(), envp.data());
  posix_spawn_file_actions_destroy(&actions);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  if (rc != 0) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::close(err_pipe[0]);
    throw Error(ErrorCode::SpawnFailure,
                "posix_spawnp " + cmd[0] + ": " + std::strerror(rc));
  }

  auto child = std::make_unique<Child>();
  child->pid = pid;
  child->stdin_fd = in_pipe[1];
  child->stdout_fd = out_pipe[0];
  child->stderr_fd = err_pipe[0];

  json init = {{"id", 0}, {"op", "init"}, {"memory_mb", config_.memory_mb}};
  json images = json::array();
  for (const auto& png : input_images_) images.push_back(base64_encode(png));
  init["images"] = std::move(images);

  if (!write_frame(child->stdin_fd, init)) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    throw Error(ErrorCode::SpawnFailure, "kernel rejected init frame");
  }

  // Wait for the init acknowledgment, draining stderr for diagnostics.
  auto deadline = steady_clock::now() +
                  std::chrono::milliseconds(
                      static_cast<long>(config_.init_timeout_seconds * 1000));
  std::string tail;
  json reply;
  bool ok = false;
  while (steady_clock::now() < deadline) {
    FrameState fs = take_frame(child->read_buffer, &reply);
    if (fs == FrameState::Ready) {
      ok = reply.value("status", "") == "ok";
      break;
    }
    if (fs == FrameState::Corrupt) break;
    struct pollfd fds[2] = {{child->stdout_fd, POLLIN, 0}, {child->stderr_fd, POLLIN, 0}};
    int pr = ::poll(fds, 2, 50);
    if (pr < 0 && errno != EINTR) break;
    char buf[4096];
    if (fds[1].revents & (POLLIN | POLLHUP)) {
      ssize_t r = ::read(child->stderr_fd, buf, sizeof buf);
      if (r > 0) tail.append(buf, static_cast<std::size_t>(r));
    }
    if (fds[0].revents & (POLLIN | POLLHUP)) {
      ssize_t r = ::read(child->stdout_fd, buf, sizeof buf);
      if (r > 0)
        child->read_buffer.append(buf, static_cast<std::size_t>(r));
      else if (r == 0)
        break;  // EOF before ack
    }
  }
  if (!ok) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, nullptr, 0);
    std::string detail = reply.is_object() ? reply.value("error", "") : "";
    throw Error(ErrorCode::SpawnFailure,
                "kernel failed to initialize: " + (detail.empty() ? tail : detail));
  }

  std::lock_guard<std::mutex> lock(state_mutex_);
  stderr_tail_ = tail;
  child_ = std::move(child);
}

ExecResult Session::execute(const std::string& source) {
  std::lock_guard<std::mutex> exec_lock(exec_mutex_);
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    if (closed_) throw Error(ErrorCode::SessionDead, "session " + id_ + " is closed");
    if (respawn_failed_)
      throw Error(ErrorCode::SessionDead, "session " + id_ + " kernel is unrecoverable");
  }

  bool resurrected = false;
  if (needs_respawn_) {
    try {
      spawn_and_init();
      needs_respawn_ = false;
      resurrected = true;
    } catch (const Error&) {
      std::lock_guard<std::mutex> lock(state_mutex_);
      respawn_failed_ = true;
      throw Error(ErrorCode::SessionDead, "session " + id_ + " kernel could not be respawned");
    }
  }

  int stdin_fd, stdout_fd, stderr_fd;
  int frame_id;
  {
    std::lock_guard<std::mutex> lock(state_mutex_);
    if (closed_) throw Error(ErrorCode::SessionDead, "session " + id_ + " is closed");
    exec_in_flight_ = true;
    stdin_fd = child_->stdin_fd;
    stdout_fd = child_->stdout_fd;
    stderr_fd = child_->stderr_fd;
    frame_id = next_frame_id_++;
  }

  auto start = steady_clock::now();
  auto finish = [&](ExecResult r) {
    r.wall_seconds =
        std::chrono::duration<double>(steady_clock::now() - start).count();
    if (resurrected) r.state_reset = true;
    std::lock_guard<std::mutex> lock(state_mutex_);
    ++exec_count_;
    exec_in_flight_ = false;
    return r;
  };
  auto fail_dead = [&](ExecStatus status, std::string stderr_text, bool reset) {
    ExecResult r;
    r.status = status;
    r.stderr_text = std::move(stderr_text);
    r.state_reset = reset;
    {
      std::lock_guard<std::mutex> lock(state_mutex_);
      kill_child_locked();
      if (!closed_) needs_respawn_ = true;
    }
    return finish(std::move(r));
  };

  json req = {{"id", frame_id}, {"source", source}};
  if (!write_frame(stdin_fd, req)) {
    bool was_closed;
    {
      std::lock_guard<std::mutex> lock(state_mutex_);
      was_closed = closed_;
    }
    if (was_closed) return fail_dead(ExecStatus::Killed, "", false);
    return fail_dead(ExecStatus::Error, "kernel died before execution:\n" + drain_child_stderr(),
                     true);
  }

  auto deadline =
      start + std::chrono::milliseconds(static_cast<long>(config_.timeout_seconds * 1000));
  for (;;) {
    json reply;
    FrameState fs;
    {
      std::lock_guard<std::mutex> lock(state_mutex_);
      fs = child_ ? take_frame(child_->read_buffer, &reply) : FrameState::Corrupt;
    }
    if (fs == FrameState::Ready) {
      if (reply.value("id", -1) != frame_id) continue;  // stale frame, skip
      ExecResult r;
      r.stdout_text = reply.value("stdout", "");
      r.stderr_text = reply.value("stderr", "");
      r.status = reply.value("status", "") == "ok" ? ExecStatus::Ok : ExecStatus::Error;
      for (const auto& b64 : reply.value("images", json::array()))
        r.images.push_back(base64_decode(b64.get<std::string>()));
      return finish(std::move(r));
    }
    if (fs == FrameState::Corrupt)
      return fail_dead(ExecStatus::Error, "kernel protocol corruption", true);

    if (steady_clock::now() >= deadline) {
      bool was_closed;
      {
        std::lock_guard<std::mutex> lock(state_mutex_);
        was_closed = closed_;
      }
      if (was_closed) return fail_dead(ExecStatus::Killed, "", false);
      std::string msg = "TimeoutError: Code execution timed out after " +
                        format_seconds(config_.timeout_seconds) +
                        " seconds. The kernel has been restarted; variables defined in "
                        "previous executions are lost.\n";
      return fail_dead(ExecStatus::Timeout, std::move(msg), true);
    }

    struct pollfd fds[2] = {{stdout_fd, POLLIN, 0}, {stderr_fd, POLLIN, 0}};
    long remain_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         deadline - steady_clock::now())
                         .count();
    int pr = ::poll(fds, 2, static_cast<int>(std::clamp(remain_ms, 1l, 50l)));
    if (pr < 0) {
      if (errno == EINTR) continue;
      return fail_dead(ExecStatus::Error, "poll failed on kernel pipes", true);
    }
    char buf[65536];
    if (fds[1].revents & (POLLIN | POLLHUP)) {
      ssize_t r = ::read(stderr_fd, buf, sizeof buf);
      if (r > 0) {
        std::lock_guard<std::mutex> lock(state_mutex_);
        stderr_tail_.append(buf, static_cast<std::size_t>(r));
        if (stderr_tail_.size() > kStderrTailCap)
          stderr_tail_.erase(0, stderr_tail_.size() - kStderrTailCap);
      }
    }
    if (fds[0].revents & (POLLIN | POLLHUP)) {
      ssize_t r = ::read(stdout_fd, buf, sizeof buf);
      if (r > 0) {
        std::lock_guard<std::mutex> lock(state_mutex_);
        if (child_) child_->read_buffer.append(buf, static_cast<std::size_t>(r));
      } else if (r == 0) {
        bool was_closed;
        {
          std::lock_guard<std::mutex> lock(state_mutex_);
          was_closed = closed_;
        }
        if (was_closed) return fail_dead(ExecStatus::Killed, "", false);
        return fail_dead(ExecStatus::Error,
                         "kernel died during execution:\n" + drain_child_stderr(), true);
      }
    }
  }
}

}  // namespace agentloop::sandbox
