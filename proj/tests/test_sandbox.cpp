#include <atomic>
#include <chrono>
#include <filesystem>
#include <thread>

#include "agentloop/errors.hpp"
#include "agentloop/sandbox.hpp"
#include "agentloop/util.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace agentloop;
using namespace agentloop::sandbox;

namespace {

SandboxConfig quick_config() {
  SandboxConfig c;
  c.timeout_seconds = 20.0;
  c.memory_mb = 512;
  return c;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

TEST_CASE("namespace persists across cells and executions are counted") {
  Session s({}, quick_config());
  CHECK(s.alive());
  ExecResult a = s.execute("x = 3");
  CHECK(a.status == ExecStatus::Ok);
  CHECK(a.stdout_text.empty());
  ExecResult b = s.execute("print(x)");
  CHECK(b.status == ExecStatus::Ok);
  CHECK(b.stdout_text == "3\n");
  CHECK_FALSE(b.state_reset);
  CHECK(s.exec_count() == 2);
}

TEST_CASE("input images are bound as PIL objects in order") {
  std::string flower = testsupport::read_fixture("images/flower.png");
  std::string chart = testsupport::read_fixture("images/chart.png");
  Session s({flower, chart}, quick_config());
  ExecResult r = s.execute("print(image_1.size, image_2.size)");
  CHECK(r.status == ExecStatus::Ok);
  CHECK(r.stdout_text == "(32, 32) (24, 24)\n");
}

TEST_CASE("referencing an unbound image raises NameError") {
  Session s({}, quick_config());
  ExecResult r = s.execute("image_1");
  CHECK(r.status == ExecStatus::Error);
  CHECK(r.stdout_text.empty());
  CHECK(r.stderr_text.find("NameError") != std::string::npos);
  CHECK(r.stderr_text.find("image_1") != std::string::npos);
}

TEST_CASE("stdout and stderr are captured separately") {
  Session s({}, quick_config());
  ExecResult r = s.execute("import sys\nprint('out')\nprint('err', file=sys.stderr)");
  CHECK(r.status == ExecStatus::Ok);
  CHECK(r.stdout_text == "out\n");
  CHECK(r.stderr_text == "err\n");
}

TEST_CASE("exceptions report a traceback but keep the kernel and state") {
  Session s({}, quick_config());
  ExecResult r = s.execute("y = 10\n1/0");
  CHECK(r.status == ExecStatus::Error);
  CHECK(r.stderr_text.find("ZeroDivisionError") != std::string::npos);
  ExecResult after = s.execute("print(y)");
  CHECK(after.status == ExecStatus::Ok);
  CHECK(after.stdout_text == "10\n");
  CHECK_FALSE(after.state_reset);
}

TEST_CASE("plt.show captures figures as PNG bytes") {
  Session s({}, quick_config());
  ExecResult r = s.execute(
      "import matplotlib.pyplot as plt\n"
      "plt.plot([0, 1], [0, 1])\n"
      "plt.show()\n"
      "print('done')");
  CHECK(r.status == ExecStatus::Ok);
  CHECK(r.stdout_text == "done\n");
  REQUIRE(r.images.size() == 1);
  CHECK(r.images[0].substr(0, 8) == std::string("\x89PNG\r\n\x1a\n", 8));
}

TEST_CASE("figure capture is byte deterministic across fresh kernels") {
  const std::string cell =
      "import matplotlib.pyplot as plt\n"
      "plt.figure(figsize=(2, 2), dpi=50)\n"
      "plt.bar([0, 1, 2], [3, 1, 2])\n"
      "plt.show()";
  Session a({}, quick_config());
  Session b({}, quick_config());
  ExecResult ra = a.execute(cell);
  ExecResult rb = b.execute(cell);
  REQUIRE(ra.images.size() == 1);
  REQUIRE(rb.images.size() == 1);
  CHECK(sha256_hex(ra.images[0]) == sha256_hex(rb.images[0]));
}

TEST_CASE("infinite loops hit the wall clock limit and reset the kernel") {
  SandboxConfig cfg = quick_config();
  cfg.timeout_seconds = 1.5;
  Session s({}, cfg);
  s.execute("z = 5");
  auto t0 = std::chrono::steady_clock::now();
  ExecResult r = s.execute("while True:\n    pass");
  double waited = seconds_since(t0);
  CHECK(r.status == ExecStatus::Timeout);
  CHECK(r.stderr_text.find("timed out after 1.5 seconds") != std::string::npos);
  CHECK(r.state_reset);
  CHECK(waited < 6.0);
  // Respawn is deferred to the next call, which starts from a blank slate.
  ExecResult after = s.execute("print('z' in globals())");
  CHECK(after.status == ExecStatus::Ok);
  CHECK(after.stdout_text == "False\n");
  CHECK(after.state_reset);
  CHECK(s.alive());
}

TEST_CASE("a dying kernel is reported and transparently respawned") {
  Session s({}, quick_config());
  s.execute("w = 1");
  ExecResult died = s.execute("import os\nos._exit(7)");
  CHECK(died.status == ExecStatus::Error);
  CHECK(died.stderr_text.find("kernel died") != std::string::npos);
  CHECK(died.state_reset);
  ExecResult after = s.execute("print('w' in globals())");
  CHECK(after.status == ExecStatus::Ok);
  CHECK(after.stdout_text == "False\n");
  CHECK(after.state_reset);
  CHECK(s.alive());
}

TEST_CASE("close is idempotent and later executions throw SessionDead") {
  Session s({}, quick_config());
  s.execute("pass");
  s.close();
  s.close();
  CHECK_FALSE(s.alive());
  try {
    s.execute("print(1)");
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SessionDead);
  }
}

TEST_CASE("closing during an execution yields Killed promptly") {
  SandboxConfig cfg = quick_config();
  cfg.timeout_seconds = 30.0;
  Session s({}, cfg);
  std::thread closer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(300));
    s.close();
  });
  auto t0 = std::chrono::steady_clock::now();
  ExecResult r = s.execute("import time\ntime.sleep(30)");
  double waited = seconds_since(t0);
  closer.join();
  CHECK(r.status == ExecStatus::Killed);
  CHECK_FALSE(r.state_reset);
  CHECK(waited < 5.0);
  CHECK_FALSE(s.alive());
}

TEST_CASE("disk write and network guards raise PermissionError, reads pass") {
  Session s({}, quick_config());
  ExecResult w = s.execute("open('f.txt', 'w')");
  CHECK(w.status == ExecStatus::Error);
  CHECK(w.stderr_text.find("Writing file to disk is not allowed") != std::string::npos);
  ExecResult rd = s.execute("open('/proc/self/status').close()\nprint('read ok')");
  CHECK(rd.status == ExecStatus::Ok);
  CHECK(rd.stdout_text == "read ok\n");
  ExecResult n = s.execute(
      "import socket\nsk = socket.socket()\nsk.connect(('127.0.0.1', 80))");
  CHECK(n.status == ExecStatus::Error);
  CHECK(n.stderr_text.find("Network access from the sandbox is not allowed") !=
        std::string::npos);
}

TEST_CASE("the memory cap turns huge allocations into MemoryError") {
  SandboxConfig cfg = quick_config();
  cfg.memory_mb = 256;
  Session s({}, cfg);
  ExecResult r = s.execute("blob = bytearray(600 * 1024 * 1024)");
  CHECK(r.status == ExecStatus::Error);
  CHECK(r.stderr_text.find("MemoryError") != std::string::npos);
  ExecResult after = s.execute("print(1 + 1)");
  CHECK(after.status == ExecStatus::Ok);
  CHECK(after.stdout_text == "2\n");
}

TEST_CASE("writing to raw fd 1 cannot corrupt the frame stream") {
  Session s({}, quick_config());
  ExecResult r = s.execute("import os\nos.write(1, b'garbage')\nprint('clean')");
  CHECK(r.status == ExecStatus::Ok);
  CHECK(r.stdout_text == "clean\n");
  ExecResult after = s.execute("print('still alive')");
  CHECK(after.stdout_text == "still alive\n");
}

TEST_CASE("an explicit workdir becomes the kernel working directory") {
  auto dir = make_temp_dir("sbxtest-");
  SandboxConfig cfg = quick_config();
  cfg.workdir = dir;
  Session s({}, cfg);
  ExecResult r = s.execute("import os\nprint(os.path.realpath(os.getcwd()))");
  CHECK(r.status == ExecStatus::Ok);
  CHECK(r.stdout_text == std::filesystem::canonical(dir).string() + "\n");
  s.close();
  std::filesystem::remove_all(dir);
}

TEST_CASE("parallel sessions do not leak state into each other") {
  Session a({}, quick_config());
  Session b({}, quick_config());
  a.execute("who = 'alpha'");
  b.execute("who = 'beta'");
  std::atomic<bool> ok_a{true}, ok_b{true};
  std::thread ta([&] {
    for (int i = 0; i < 10; ++i)
      if (a.execute("print(who)").stdout_text != "alpha\n") ok_a = false;
  });
  std::thread tb([&] {
    for (int i = 0; i < 10; ++i)
      if (b.execute("print(who)").stdout_text != "beta\n") ok_b = false;
  });
  ta.join();
  tb.join();
  CHECK(ok_a);
  CHECK(ok_b);
}
