#include "agentloop/errors.hpp"
#include "agentloop/orchestrator.hpp"
#include "agentloop/prompts.hpp"
#include "agentloop/util.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace agentloop;
using namespace agentloop::orchestrator;
using model::ScriptedModel;

namespace {

RunRequest basic_request(const std::string& id = "t") {
  RunRequest req;
  req.id = id;
  req.question = "what is shown?";
  req.budget.max_turns = 6;
  return req;
}

ToolBelt code_only_tools() {
  ToolBelt tools;
  tools.sandbox_config.timeout_seconds = 20.0;
  return tools;
}

}  // namespace

TEST_CASE("a valid answer on the first turn ends the run") {
  ScriptedModel model;
  model.set_default("<think>easy</think><answer> Paris </answer>");
  ToolBelt tools;
  RunRequest req = basic_request("t1");
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::Answered);
  CHECK(t.final_answer == "Paris");
  CHECK(extract_answer(t) == "Paris");
  REQUIRE(t.turns.size() == 1);
  CHECK(t.turns[0].events.empty());
  CHECK(t.counters.code_execs == 0);
  CHECK(t.config["policy"]["allow_code"] == true);
  CHECK(t.config["budget"]["max_turns"] == 6);
  CHECK(model.calls() == 1);
}

TEST_CASE("code output is injected back and drives the next turn") {
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0),
                 "<think>compute</think><code>print(6 * 7)</code>");
  model.add_step(ScriptedModel::match_last_contains("42"),
                 "<think>saw it</think><answer>42</answer>");
  model.set_default("<think>lost</think><answer>unknown</answer>");
  ToolBelt tools = code_only_tools();
  Trajectory t = run(basic_request(), model, tools);
  CHECK(t.termination == Termination::Answered);
  CHECK(t.final_answer == "42");
  REQUIRE(t.turns.size() == 2);
  REQUIRE(t.turns[0].events.size() == 1);
  const ToolEvent& ev = t.turns[0].events[0];
  CHECK(ev.kind == ToolKind::CodeExec);
  CHECK_FALSE(ev.refused);
  CHECK(ev.code_class == sandbox::CodeClass::NumericalAnalysis);
  CHECK(ev.observation.text.find("stdout:\n```\n42\n```") != std::string::npos);
  CHECK(ev.result["status"] == "Ok");
  CHECK(t.counters.code_execs == 1);
}

TEST_CASE("multiple code segments in one turn run in order in one kernel") {
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0),
                 "<think>s</think><code>v = 5</code><code>print(v + 2)</code>");
  model.add_step(ScriptedModel::match_last_contains("7"),
                 "<think>d</think><answer>7</answer>");
  model.set_default("<think>?</think><answer>unknown</answer>");
  ToolBelt tools = code_only_tools();
  Trajectory t = run(basic_request(), model, tools);
  CHECK(t.final_answer == "7");
  REQUIRE(t.turns[0].events.size() == 2);
  CHECK(t.turns[0].events[1].observation.text.find("7") != std::string::npos);
  CHECK(t.counters.code_execs == 2);
}

TEST_CASE("image search attaches fixture thumbnails to the image table") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0),
                 "<think>look</think><tool_call>{\"name\": \"image_search\"}</tool_call>");
  model.add_step(ScriptedModel::match_last_contains("Rose (Rosa)"),
                 "<think>got it</think><answer>rose</answer>");
  model.set_default("<think>?</think><answer>unknown</answer>");
  RunRequest req = basic_request();
  req.input_images_png = {testsupport::read_fixture("images/flower.png")};
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::Answered);
  CHECK(t.final_answer == "rose");
  CHECK(t.counters.image_searches == 1);
  CHECK(t.input_image_count == 1);
  CHECK(t.images.size() == 6);  // input + five thumbnails
  REQUIRE(t.turns.size() == 2);
  const ToolEvent& ev = t.turns[0].events[0];
  CHECK(ev.kind == ToolKind::ImageSearch);
  REQUIRE(ev.observation.attachments.size() == 5);
  CHECK(ev.observation.attachments[0] == 1);
  CHECK(starts_with(ev.observation.text,
                    "A Google image search for the image found 5 results:"));
}

TEST_CASE("a second image search in the same trajectory is refused") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  const std::string call =
      "<think>again</think><tool_call>{\"name\": \"image_search\"}</tool_call>";
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0), call);
  model.add_step(ScriptedModel::match_turn_index(1), call);
  model.set_default("<think>fine</think><answer>rose</answer>");
  RunRequest req = basic_request();
  req.input_images_png = {testsupport::read_fixture("images/flower.png")};
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::Answered);
  CHECK(t.counters.image_searches == 1);
  REQUIRE(t.turns.size() == 3);
  const ToolEvent& second = t.turns[1].events[0];
  CHECK(second.refused);
  CHECK(second.refusal_reason ==
        "Image search has already been used and cannot be called again.");
  CHECK(second.observation.text == second.refusal_reason);
  CHECK(second.result.is_null());
}

TEST_CASE("image search without an input image is refused") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0),
                 "<think>look</think><tool_call>{\"name\": \"image_search\"}</tool_call>");
  model.set_default("<think>ok</think><answer>none</answer>");
  Trajectory t = run(basic_request(), model, tools);
  const ToolEvent& ev = t.turns[0].events[0];
  CHECK(ev.refused);
  CHECK(ev.refusal_reason == "There is no input image to perform an image search with.");
  CHECK(t.counters.image_searches == 0);
}

TEST_CASE("policy switches refuse tools with fixed reasons") {
  search::SearchClient search_client = testsupport::make_replay_search();

  SUBCASE("code disabled") {
    ScriptedModel model;
    model.add_step(ScriptedModel::match_turn_index(0),
                   "<think>c</think><code>print(1)</code>");
    model.add_step(ScriptedModel::match_last_contains("not available"),
                   "<think>ok</think><answer>skip</answer>");
    model.set_default("<think>?</think><answer>unknown</answer>");
    ToolBelt tools;
    RunRequest req = basic_request();
    req.policy.allow_code = false;
    Trajectory t = run(req, model, tools);
    CHECK(t.final_answer == "skip");  // refusal text reached the model
    CHECK(t.turns[0].events[0].refusal_reason ==
          "The python tool is not available for this task.");
    CHECK(t.counters.code_execs == 0);
  }

  SUBCASE("text search disabled") {
    ScriptedModel model;
    model.add_step(
        ScriptedModel::match_turn_index(0),
        "<think>s</think><tool_call>{\"name\": \"search\", \"arguments\": "
        "{\"query\": \"capital of france\"}}</tool_call>");
    model.set_default("<think>ok</think><answer>skip</answer>");
    ToolBelt tools;
    tools.search = &search_client;
    RunRequest req = basic_request();
    req.policy.allow_text_search = false;
    Trajectory t = run(req, model, tools);
    CHECK(t.turns[0].events[0].refusal_reason ==
          "Text search is not available for this task.");
    CHECK(t.counters.text_searches == 0);
  }

  SUBCASE("image search disabled") {
    ScriptedModel model;
    model.add_step(ScriptedModel::match_turn_index(0),
                   "<think>i</think><tool_call>{\"name\": \"image_search\"}</tool_call>");
    model.set_default("<think>ok</think><answer>skip</answer>");
    ToolBelt tools;
    tools.search = &search_client;
    RunRequest req = basic_request();
    req.policy.allow_image_search = false;
    req.input_images_png = {testsupport::read_fixture("images/flower.png")};
    Trajectory t = run(req, model, tools);
    CHECK(t.turns[0].events[0].refusal_reason ==
          "Image search is not available for this task.");
    CHECK(t.counters.image_searches == 0);
  }
}

TEST_CASE("an invalid turn gets one corrective retry") {
  ScriptedModel model;
  model.add_step(ScriptedModel::match_turn_index(0), "this is not the format");
  model.add_step(ScriptedModel::match_last_contains("not in the required format"),
                 "<think>retry</think><answer>fixed</answer>");
  model.set_default("<think>?</think><answer>unknown</answer>");
  ToolBelt tools;
  Trajectory t = run(basic_request(), model, tools);
  CHECK(t.termination == Termination::Answered);
  CHECK(t.final_answer == "fixed");
  REQUIRE(t.turns.size() == 2);
  CHECK(t.turns[0].corrective == std::string(prompts::format_corrective_message()));
  CHECK_FALSE(t.turns[1].corrective.has_value());
}

TEST_CASE("persistent invalid output becomes FormatFailure") {
  ScriptedModel model;
  model.set_default("still not the format");
  ToolBelt tools;
  RunRequest req = basic_request();
  req.policy.max_format_retries = 1;
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::FormatFailure);
  REQUIRE(t.turns.size() == 2);
  CHECK(t.turns[0].corrective.has_value());
  CHECK_FALSE(t.turns[1].corrective.has_value());
  CHECK_FALSE(extract_answer(t).has_value());
}

TEST_CASE("running out of turns yields TurnBudget") {
  ScriptedModel model;
  model.set_default("<think>more</think><code>print(1)</code>");
  ToolBelt tools = code_only_tools();
  RunRequest req = basic_request();
  req.budget.max_turns = 2;
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::TurnBudget);
  CHECK(t.turns.size() == 2);
  CHECK(t.counters.code_execs == 2);
}

TEST_CASE("hitting the response token cap yields TokenBudget") {
  ScriptedModel model;
  model.set_default("<think>" + std::string(400, 'a') + "</think><answer>x</answer>");
  ToolBelt tools;
  RunRequest req = basic_request();
  req.budget.max_response_tokens = 10;
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::TokenBudget);
  REQUIRE(t.turns.size() == 1);
  CHECK(t.turns[0].token_count == 10);
}

TEST_CASE("a missing search client folds into ToolFailure") {
  ScriptedModel model;
  model.add_step(
      ScriptedModel::match_turn_index(0),
      "<think>s</think><tool_call>{\"name\": \"search\", \"arguments\": "
      "{\"query\": \"anything\"}}</tool_call>");
  model.set_default("<think>?</think><answer>unknown</answer>");
  ToolBelt tools;  // no search client
  Trajectory t = run(basic_request(), model, tools);
  CHECK(t.termination == Termination::ToolFailure);
  REQUIRE(t.turns.size() == 1);
  const ToolEvent& ev = t.turns[0].events[0];
  CHECK(ev.result["error"] == "ConfigError: no search client configured");
  CHECK(ev.observation.text == "Tool failure: ConfigError: no search client configured");
}

TEST_CASE("replay misses fold into ToolFailure unless strict") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  ScriptedModel model;
  model.add_step(
      ScriptedModel::match_turn_index(0),
      "<think>s</think><tool_call>{\"name\": \"search\", \"arguments\": "
      "{\"query\": \"query nobody recorded\"}}</tool_call>");
  model.set_default("<think>?</think><answer>unknown</answer>");

  RunRequest req = basic_request();
  Trajectory t = run(req, model, tools);
  CHECK(t.termination == Termination::ToolFailure);
  CHECK(t.turns[0].events[0].result["error"].get<std::string>().find("not found under") !=
        std::string::npos);

  req.policy.strict_tool_errors = true;
  ScriptedModel model2;
  model2.add_step(
      ScriptedModel::match_turn_index(0),
      "<think>s</think><tool_call>{\"name\": \"search\", \"arguments\": "
      "{\"query\": \"query nobody recorded\"}}</tool_call>");
  try {
    run(req, model2, tools);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ReplayMiss);
  }
}

TEST_CASE("text search observation quotes the query verbatim") {
  search::SearchClient search_client = testsupport::make_replay_search();
  ToolBelt tools;
  tools.search = &search_client;
  ScriptedModel model;
  model.add_step(
      ScriptedModel::match_turn_index(0),
      "<think>s</think><tool_call>{\"name\": \"search\", \"arguments\": "
      "{\"query\": \"capital of france\"}}</tool_call>");
  model.add_step(ScriptedModel::match_last_contains("Paris - Capital of France"),
                 "<think>found</think><answer>Paris</answer>");
  model.set_default("<think>?</think><answer>unknown</answer>");
  Trajectory t = run(basic_request(), model, tools);
  CHECK(t.final_answer == "Paris");
  CHECK(t.counters.text_searches == 1);
  CHECK(starts_with(t.turns[0].events[0].observation.text,
                    "A Google search for 'capital of france' found 5 results:"));
}

TEST_CASE("answers keep internal newlines but lose outer whitespace") {
  ScriptedModel model;
  model.set_default("<think>t</think><answer>\n line one\nline two \n</answer>");
  ToolBelt tools;
  Trajectory t = run(basic_request(), model, tools);
  CHECK(t.final_answer == "line one\nline two");
}
