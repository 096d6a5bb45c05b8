#include <filesystem>

#include "agentloop/blob_store.hpp"
#include "agentloop/errors.hpp"
#include "agentloop/orchestrator.hpp"
#include "agentloop/util.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace agentloop;
using namespace agentloop::orchestrator;
using model::ScriptedModel;
using nlohmann::json;

namespace {

// A short real run exercising code, search, thumbnails and an answer, so the
// serialized form covers every field family.
Trajectory make_rich_trajectory(ToolBelt& tools) {
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0),
                 "<think>compute</think><code>print(2 + 2)</code>");
  model.add_step(ScriptedModel::match_turn_index(1),
                 "<think>look</think><tool_call>{\"name\": \"image_search\"}</tool_call>");
  model.add_step(ScriptedModel::match_last_contains("Rose (Rosa)"),
                 "<think>done</think><answer>rose</answer>");
  model.set_default("<think>?</think><answer>unknown</answer>");
  RunRequest req;
  req.id = "rich-1";
  req.question = "what flower is this?";
  req.input_images_png = {testsupport::read_fixture("images/flower.png")};
  req.budget.max_turns = 5;
  req.budget.seed = 11;
  return run(req, model, tools);
}

}  // namespace

TEST_CASE("blob store is content addressed and idempotent") {
  auto dir = make_temp_dir("blobs-");
  BlobStore blobs(dir);
  std::string key = blobs.put("payload-bytes");
  CHECK(key == sha256_hex("payload-bytes"));
  CHECK(blobs.contains(key));
  CHECK(blobs.get(key) == "payload-bytes");
  CHECK(blobs.put("payload-bytes") == key);
  CHECK(std::filesystem::exists(dir / (key + ".png")));
  CHECK_FALSE(blobs.contains("0000"));
  try {
    blobs.get("0000");
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::IoError);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("serialize and deserialize round-trip a rich trajectory exactly") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  Trajectory original = make_rich_trajectory(tools);
  REQUIRE(original.termination == Termination::Answered);
  REQUIRE(original.images.size() == 6);  // input + 5 thumbnails

  auto dir = make_temp_dir("trajio-");
  BlobStore blobs(dir);
  std::string line = serialize(original, blobs);
  CHECK(line.find('\n') == std::string::npos);  // one JSONL line
  for (const auto& png : original.images) CHECK(blobs.contains(sha256_hex(png)));

  Trajectory restored = deserialize(line, blobs);
  CHECK(trajectory_to_json(restored) == trajectory_to_json(original));
  CHECK(restored.images == original.images);
  CHECK(restored.timing.started_unix_ms == original.timing.started_unix_ms);
  CHECK(restored.final_answer == original.final_answer);
  CHECK(restored.counters.image_searches == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("unknown fields survive a round trip through extra") {
  Trajectory t;
  t.id = "x";
  json j = trajectory_to_json(t);
  j["annotator_notes"] = {{"grade", "A"}, {"tags", {"easy"}}};
  Trajectory restored = trajectory_from_json(j, nullptr);
  CHECK(restored.extra["annotator_notes"]["grade"] == "A");
  json out = trajectory_to_json(restored);
  CHECK(out["annotator_notes"] == j["annotator_notes"]);
}

TEST_CASE("truncated lines report the byte offset of the damage") {
  auto dir = make_temp_dir("trajio-");
  BlobStore blobs(dir);
  Trajectory t;
  t.id = "short";
  std::string line = serialize(t, blobs);
  std::string cut = line.substr(0, line.size() / 2);
  try {
    deserialize(cut, blobs);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaMismatch);
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("schema version and image preconditions are enforced") {
  Trajectory t;
  json j = trajectory_to_json(t);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(trajectory_from_json(j, nullptr), Error);

  json with_images = trajectory_to_json(t);
  with_images["images"] = {sha256_hex("img")};
  try {
    trajectory_from_json(with_images, nullptr);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Precondition);
  }
}

TEST_CASE("normalization zeroes run artifacts but keeps semantic content") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  Trajectory a = make_rich_trajectory(tools);

  Trajectory perturbed = a;
  perturbed.timing.started_unix_ms += 12345;
  perturbed.timing.wall_ms += 99;
  for (auto& turn : perturbed.turns)
    for (auto& ev : turn.events)
      if (ev.result.is_object() && ev.result.contains("wall_seconds"))
        ev.result["wall_seconds"] = 123.0;
  CHECK(equal_ignoring_timing(a, perturbed));
  CHECK_FALSE(first_divergence(a, perturbed).has_value());

  Trajectory tampered = a;
  tampered.turns[0].text += "!";
  CHECK_FALSE(equal_ignoring_timing(a, tampered));
}

TEST_CASE("first_divergence names the earliest differing turn and field") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  Trajectory a = make_rich_trajectory(tools);

  SUBCASE("text difference") {
    Trajectory b = a;
    b.turns[1].text = "<think>other</think><answer>no</answer>";
    auto d = first_divergence(a, b);
    REQUIRE(d.has_value());
    CHECK(d->turn_index == 1);
    CHECK(d->field == "text");
    CHECK(d->detail.find("recorded") != std::string::npos);
  }

  SUBCASE("event difference") {
    Trajectory b = a;
    b.turns[0].events[0].observation.text = "tampered";
    auto d = first_divergence(a, b);
    REQUIRE(d.has_value());
    CHECK(d->turn_index == 0);
    CHECK(d->field == "events");
  }

  SUBCASE("missing turn") {
    Trajectory b = a;
    b.turns.pop_back();
    auto d = first_divergence(a, b);
    REQUIRE(d.has_value());
    CHECK(d->field == "turn_count");
    CHECK(d->turn_index == static_cast<int>(b.turns.size()));
  }

  SUBCASE("termination difference") {
    Trajectory b = a;
    b.termination = Termination::ToolFailure;
    auto d = first_divergence(a, b);
    REQUIRE(d.has_value());
    CHECK(d->turn_index == -1);
    CHECK(d->field == "termination");
  }
}

TEST_CASE("replay regenerates a recorded run without divergence") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  Trajectory record = make_rich_trajectory(tools);

  ReplayResult result = replay(record, tools);
  CHECK_FALSE(result.divergence.has_value());
  CHECK(equal_ignoring_timing(record, result.regenerated));
}

TEST_CASE("replay flags divergence when the record was edited") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  Trajectory record = make_rich_trajectory(tools);

  // The replay model re-emits the edited text, so the regenerated parse and
  // events disagree with the stored ones from the original text.
  record.turns[0].text = "<think>x</think><code>print(3 + 3)</code>";
  ReplayResult result = replay(record, tools);
  REQUIRE(result.divergence.has_value());
  CHECK(result.divergence->turn_index == 0);
}
