#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace agentloop::sandbox {

struct SandboxConfig {
  double timeout_seconds = 300.0;  // per-execution wall clock limit
  double grace_seconds = 5.0;      // extra budget for kill + cleanup paths
  int memory_mb = 1024;            // heap cap inside the kernel, <=0 disables
  double init_timeout_seconds = 30.0;
  // Override for the kernel launch; empty means `python3 -c <embedded kernel>`.
  std::vector<std::string> interpreter_cmd;
  std::filesystem::path workdir;   // empty means a fresh temp dir per session
};

enum class ExecStatus {
  Ok,       // cell ran to completion
  Error,    // cell raised; traceback is in stderr_text
  Timeout,  // wall clock limit hit; kernel was killed
  Killed,   // session closed externally while the cell ran
};

const char* exec_status_name(ExecStatus status);

struct ExecResult {
  std::string stdout_text;
  std::string stderr_text;
  std::vector<std::string> images;  // PNGs captured from plt.show()
  ExecStatus status = ExecStatus::Ok;
  double wall_seconds = 0.0;
  // True when this result was produced around a kernel restart, i.e. the
  // notebook namespace from earlier cells is gone.
  bool state_reset = false;
};

// One persistent Python kernel bound to the trajectory's input images.
// execute() calls are serialized by an internal lock; close() may be called
// from another thread and converts an in-flight execution into Killed.
class Session {
 public:
  // Spawns and initializes the kernel.  Throws Error(SpawnFailure).
  Session(std::vector<std::string> input_images_png, SandboxConfig config);
  ~Session();

  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  // Runs one cell.  Never throws for in-cell failures (status covers them);
  // throws Error(SessionDead) once the session is closed or unrecoverable.
  ExecResult execute(const std::string& source);

  void close();  // idempotent
  bool alive() const;
  int exec_count() const;
  const std::string& id() const { return id_; }

 private:
  struct Child;  // pid + pipe fds

  void spawn_and_init();          // caller holds exec_mutex_
  void kill_child_locked();       // caller holds state_mutex_
  std::string drain_child_stderr();

  std::string id_;
  SandboxConfig config_;
  std::vector<std::string> input_images_;
  std::filesystem::path workdir_;
  bool owns_workdir_ = false;

  mutable std::mutex exec_mutex_;   // serializes execute()/spawn
  mutable std::mutex state_mutex_;  // guards child_, closed_, flags
  std::unique_ptr<Child> child_;
  bool closed_ = false;
  bool exec_in_flight_ = false;
  bool needs_respawn_ = false;
  bool respawn_failed_ = false;
  int exec_count_ = 0;
  int next_frame_id_ = 1;
  std::string stderr_tail_;  // ring buffer of recent child diagnostics
};

// Heuristic label for what a code cell does, used by evaluation statistics.
enum class CodeClass { Crop, NumericalAnalysis, Mark, Other };

const char* code_class_name(CodeClass c);
CodeClass classify_code(std::string_view source);

}  // namespace agentloop::sandbox
