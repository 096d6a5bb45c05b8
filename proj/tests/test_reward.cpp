#include <random>

#include <doctest.h>

#include "agentloop/protocol.hpp"
#include "agentloop/reward.hpp"
#include "test_support.hpp"

using namespace agentloop;
using namespace agentloop::reward;
using orchestrator::Termination;
using orchestrator::Trajectory;
using orchestrator::TurnRecord;

namespace {

Trajectory make_traj(const std::vector<std::string>& turn_texts, Termination termination) {
  Trajectory t;
  t.id = "test";
  for (const auto& text : turn_texts) {
    TurnRecord rec;
    rec.text = text;
    rec.parse = protocol::parse_turn(text);
    t.turns.push_back(std::move(rec));
  }
  t.termination = termination;
  if (termination == Termination::Answered && !t.turns.empty())
    t.final_answer = protocol::extract_answer(t.turns.back().parse);
  return t;
}

Trajectory answered(const std::string& answer) {
  return make_traj({"<think>decide.</think><answer>" + answer + "</answer>"},
                   Termination::Answered);
}

}  // namespace

TEST_CASE("normalization lowercases, strips punctuation and articles") {
  CHECK(normalize_answer("Paris.") == "paris");
  CHECK(normalize_answer("The Quick-Brown fox!") == "quick brown fox");
  CHECK(normalize_answer("a/b") == "b");  // '/' to space, then article 'a' dropped
  CHECK(normalize_answer("  An   apple  ") == "apple");
  CHECK(normalize_answer("don't") == "dont");
  CHECK(normalize_answer("") == "");
}

TEST_CASE("normalization is idempotent on random ASCII strings") {
  std::mt19937 rng(11);
  for (int i = 0; i < 500; ++i) {
    std::string s(rng() % 40, ' ');
    for (auto& c : s) c = static_cast<char>(32 + rng() % 95);
    std::string once = normalize_answer(s);
    CHECK(normalize_answer(once) == once);
  }
}

TEST_CASE("normalization is invariant under case, punctuation and articles") {
  const std::string base = "golden gate bridge";
  CHECK(normalize_answer("Golden Gate Bridge") == base);
  CHECK(normalize_answer("the Golden Gate Bridge!") == base);
  CHECK(normalize_answer("golden-gate bridge") == base);
  CHECK(normalize_answer("Golden   Gate... Bridge?!") == base);
  // Punctuation is deleted, not blanked, so it never splits a token.
  CHECK(normalize_answer("Gate...Bridge") == "gatebridge");
  CHECK(normalize_answer("don't") == "dont");
}

TEST_CASE("leading number parsing handles signs, commas and decimals") {
  CHECK(parse_leading_number("42 apples") == doctest::Approx(42));
  CHECK(parse_leading_number("roughly 1,234.5 units") == doctest::Approx(1234.5));
  CHECK(parse_leading_number("-7") == doctest::Approx(-7));
  CHECK(parse_leading_number("$3.50") == doctest::Approx(3.5));
  CHECK(parse_leading_number("2e3 things") == doctest::Approx(2000));
  CHECK_FALSE(parse_leading_number("no digits here").has_value());
}

TEST_CASE("choice letter extraction finds the first standalone letter") {
  CHECK(extract_choice_letter("B") == 'B');
  CHECK(extract_choice_letter("(b)") == 'B');
  CHECK(extract_choice_letter("Answer: C") == 'C');
  CHECK(extract_choice_letter("D. because of gravity") == 'D');
  CHECK_FALSE(extract_choice_letter("Because of gravity").has_value());
  CHECK_FALSE(extract_choice_letter("42").has_value());
}

TEST_CASE("free text accuracy uses normalized comparison") {
  GroundTruth truth;
  truth.answer = "paris";
  CHECK(accuracy_reward(answered("Paris."), truth) == 1.0);
  CHECK(accuracy_reward(answered("The Paris"), truth) == 1.0);
  CHECK(accuracy_reward(answered("london"), truth) == 0.0);
}

TEST_CASE("aliases count as correct and report what matched") {
  GroundTruth truth;
  truth.answer = "paris";
  truth.aliases = {"city of light"};
  JudgeKind judge;
  std::string matched;
  CHECK(answer_matches("City of Light!", truth, &judge, &matched));
  CHECK(judge == JudgeKind::ExactNorm);
  CHECK(matched == "city of light");
}

TEST_CASE("numeric tolerance acts relatively") {
  GroundTruth truth;
  truth.answer = "3.141592653589793";
  truth.answer_type = AnswerType::Numeric;
  // |3.14159 - pi| / pi = 8.45e-7: inside 1e-3, outside 1e-9.
  truth.numeric_tolerance = 1e-3;
  CHECK(accuracy_reward(answered("3.14159"), truth) == 1.0);
  truth.numeric_tolerance = 1e-9;
  CHECK(accuracy_reward(answered("3.14159"), truth) == 0.0);
}

TEST_CASE("numeric judge reads numbers out of prose answers") {
  GroundTruth truth;
  truth.answer = "42";
  truth.answer_type = AnswerType::Numeric;
  JudgeKind judge;
  CHECK(answer_matches("The count is 42 items", truth, &judge, nullptr));
  CHECK(judge == JudgeKind::NumericTol);
  CHECK_FALSE(answer_matches("The count is 43 items", truth));
}

TEST_CASE("multiple choice compares letters case-insensitively") {
  GroundTruth truth;
  truth.answer = "B";
  truth.answer_type = AnswerType::MultipleChoice;
  CHECK(accuracy_reward(answered("(b) eleven"), truth) == 1.0);
  CHECK(accuracy_reward(answered("C"), truth) == 0.0);
}

TEST_CASE("missing answer always scores zero accuracy") {
  GroundTruth truth;
  truth.answer = "anything";
  Trajectory t = make_traj({"<think>hmm</think><code>x = 1</code>"},
                           Termination::TurnBudget);
  CHECK(accuracy_reward(t, truth) == 0.0);
}

TEST_CASE("format reward is zero only for fully valid answered trajectories") {
  Trajectory good = make_traj({"<think>a</think><code>print(1)</code>",
                               "<think>b</think><tool_call>{\"name\": \"image_search\"}"
                               "</tool_call>",
                               "<think>c</think><answer>done</answer>"},
                              Termination::Answered);
  CHECK(format_reward(good) == 0.0);

  Trajectory stray = make_traj({"<think>a</think>oops<answer>x</answer>"},
                               Termination::Answered);
  CHECK(format_reward(stray) == -1.0);

  Trajectory budget = make_traj({"<think>a</think><code>print(1)</code>"},
                                Termination::TurnBudget);
  CHECK(format_reward(budget) == -1.0);
}

TEST_CASE("score reproduces the three canonical examples") {
  GroundTruth truth;
  truth.answer = "4";

  RewardBreakdown correct_valid = score(answered("4"), truth);
  CHECK(correct_valid.r_acc == 1.0);
  CHECK(correct_valid.r_format == 0.0);
  CHECK(correct_valid.total == 1.0);

  Trajectory invalid = make_traj({"<think>a</think>junk<answer>4</answer>"},
                                 Termination::Answered);
  RewardBreakdown correct_invalid = score(invalid, truth);
  CHECK(correct_invalid.r_acc == 1.0);
  CHECK(correct_invalid.r_format == -1.0);
  CHECK(correct_invalid.total == 0.0);

  RewardBreakdown wrong_valid = score(answered("5"), truth);
  CHECK(wrong_valid.r_acc == 0.0);
  CHECK(wrong_valid.r_format == 0.0);
  CHECK(wrong_valid.total == 0.0);
}

TEST_CASE("total equals r_acc plus r_format over randomized trajectories") {
  std::mt19937 rng(77);
  GroundTruth truth;
  truth.answer = "7";
  for (int i = 0; i < 300; ++i) {
    bool valid = rng() % 2 == 0;
    bool correct = rng() % 2 == 0;
    std::string answer = correct ? "7" : "8";
    std::string turn = valid
                           ? "<think>t</think><answer>" + answer + "</answer>"
                           : "<think>t</think>noise<answer>" + answer + "</answer>";
    Trajectory t = make_traj({turn}, Termination::Answered);
    RewardBreakdown b = score(t, truth);
    CHECK(b.total == b.r_acc + b.r_format + b.r_bonus);
    CHECK(b.r_bonus == 0.0);
  }
}

TEST_CASE("optional tool bonus only pays out for executed tool calls") {
  GroundTruth truth;
  truth.answer = "4";
  RewardOptions options;
  options.tool_use_bonus = 0.5;

  // No tool events: no bonus even when enabled.
  RewardBreakdown no_tools = score(answered("4"), truth, options);
  CHECK(no_tools.r_bonus == 0.0);
  CHECK(no_tools.total == 1.0);

  Trajectory with_tool = make_traj({"<think>a</think><code>print(4)</code>",
                                    "<think>b</think><answer>4</answer>"},
                                   Termination::Answered);
  orchestrator::ToolEvent ev;
  ev.kind = orchestrator::ToolKind::CodeExec;
  ev.refused = false;
  with_tool.turns[0].events.push_back(ev);
  RewardBreakdown with_bonus = score(with_tool, truth, options);
  CHECK(with_bonus.r_bonus == 0.5);
  CHECK(with_bonus.total == 1.5);

  // A refused call does not count as tool use.
  with_tool.turns[0].events[0].refused = true;
  CHECK(score(with_tool, truth, options).r_bonus == 0.0);
}

TEST_CASE("ground truth serialization round-trips") {
  GroundTruth truth;
  truth.answer = "42";
  truth.aliases = {"forty-two", "forty two"};
  truth.answer_type = AnswerType::Numeric;
  truth.numeric_tolerance = 1e-3;
  GroundTruth back = ground_truth_from_json(ground_truth_to_json(truth));
  CHECK(back.answer == truth.answer);
  CHECK(back.aliases == truth.aliases);
  CHECK(back.answer_type == truth.answer_type);
  CHECK(back.numeric_tolerance == truth.numeric_tolerance);
}
