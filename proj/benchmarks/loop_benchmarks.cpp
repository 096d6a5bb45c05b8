// Microbenchmarks for the per-turn hot paths: tag parsing, observation
// rendering, answer normalization, code classification, and trajectory
// (de)serialization.

#include <benchmark/benchmark.h>

#include <filesystem>
#include <string>
#include <vector>

#include "agentloop/blob_store.hpp"
#include "agentloop/orchestrator.hpp"
#include "agentloop/protocol.hpp"
#include "agentloop/reward.hpp"
#include "agentloop/sandbox.hpp"
#include "agentloop/util.hpp"

using namespace agentloop;

namespace {

const std::string kAnswerTurn = "<think>The capital is well known.</think><answer>Paris</answer>";

const std::string kCodeTurn =
    "<think>Crop the region of interest and inspect it closely before deciding.</think>"
    "<code>crop = image_1.crop((8, 8, 24, 24))\nimport matplotlib.pyplot as plt\n"
    "plt.imshow(crop)\nplt.show()</code>"
    "<code>print(crop.size)\nprint(sum([1, 2, 3]) * 7)</code>";

const std::string kJunkTurn =
    "prefix prose <think>unclosed <code>print(1)</code> trailing <answer></answer> mess";

void BM_parse_turn_answer(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(protocol::parse_turn(kAnswerTurn));
}
BENCHMARK(BM_parse_turn_answer);

void BM_parse_turn_code(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(protocol::parse_turn(kCodeTurn));
}
BENCHMARK(BM_parse_turn_code);

void BM_parse_turn_invalid(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(protocol::parse_turn(kJunkTurn));
}
BENCHMARK(BM_parse_turn_invalid);

void BM_render_code_result(benchmark::State& state) {
  protocol::CodeResultPayload payload;
  payload.stdout_text = "line one\nline two\nline three\n";
  payload.stderr_text = "";
  payload.images = {"png-bytes"};
  for (auto _ : state) benchmark::DoNotOptimize(protocol::render_code_result(payload));
}
BENCHMARK(BM_render_code_result);

std::vector<protocol::SearchResultEntry> search_entries(bool thumbs) {
  std::vector<protocol::SearchResultEntry> entries;
  for (int i = 0; i < 5; ++i) {
    protocol::SearchResultEntry e;
    e.title = "Result title " + std::to_string(i);
    e.link = "https://example.test/page/" + std::to_string(i);
    e.snippet = "A medium-length snippet describing result " + std::to_string(i) + ".";
    if (thumbs) e.thumbnail_png = "thumbnail-bytes";
    entries.push_back(std::move(e));
  }
  return entries;
}

void BM_render_text_search(benchmark::State& state) {
  auto entries = search_entries(false);
  for (auto _ : state)
    benchmark::DoNotOptimize(protocol::render_text_search_result("query terms", entries));
}
BENCHMARK(BM_render_text_search);

void BM_render_image_search(benchmark::State& state) {
  auto entries = search_entries(true);
  for (auto _ : state)
    benchmark::DoNotOptimize(protocol::render_image_search_result(entries));
}
BENCHMARK(BM_render_image_search);

void BM_normalize_answer(benchmark::State& state) {
  const std::string text = "The Golden-Gate Bridge, San Francisco/California (1937)!";
  for (auto _ : state) benchmark::DoNotOptimize(reward::normalize_answer(text));
}
BENCHMARK(BM_normalize_answer);

void BM_classify_code(benchmark::State& state) {
  const std::string source =
      "import numpy as np\nvalues = np.array([1, 2, 3])\nprint(values.mean() * 2 + 1)\n";
  for (auto _ : state) benchmark::DoNotOptimize(sandbox::classify_code(source));
}
BENCHMARK(BM_classify_code);

orchestrator::Trajectory sample_trajectory() {
  orchestrator::Trajectory t;
  t.id = "bench-1";
  t.question = "What flower is shown?";
  for (const std::string& text : {kCodeTurn, kAnswerTurn}) {
    orchestrator::TurnRecord rec;
    rec.text = text;
    rec.token_count = 40;
    rec.parse = protocol::parse_turn(text);
    if (rec.parse.count_of(protocol::SegmentKind::Code) > 0) {
      orchestrator::ToolEvent ev;
      ev.kind = orchestrator::ToolKind::CodeExec;
      ev.request = "print(1)";
      ev.result = {{"status", "Ok"}, {"stdout", "1\n"}, {"stderr", ""}};
      ev.observation.text = "Code execution result:\n\nstdout:\n```\n1\n```\n\nstderr:\n```\n```";
      ev.code_class = sandbox::CodeClass::Crop;
      rec.events.push_back(std::move(ev));
    }
    t.turns.push_back(std::move(rec));
  }
  t.final_answer = "Paris";
  t.termination = orchestrator::Termination::Answered;
  t.counters.code_execs = 1;
  return t;
}

void BM_serialize_trajectory(benchmark::State& state) {
  auto dir = make_temp_dir("bench-ser-");
  BlobStore blobs(dir);
  orchestrator::Trajectory t = sample_trajectory();
  for (auto _ : state) benchmark::DoNotOptimize(orchestrator::serialize(t, blobs));
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_serialize_trajectory);

void BM_deserialize_trajectory(benchmark::State& state) {
  auto dir = make_temp_dir("bench-des-");
  BlobStore blobs(dir);
  std::string line = orchestrator::serialize(sample_trajectory(), blobs);
  for (auto _ : state) benchmark::DoNotOptimize(orchestrator::deserialize(line, blobs));
  std::filesystem::remove_all(dir);
}
BENCHMARK(BM_deserialize_trajectory);

}  // namespace

BENCHMARK_MAIN();
