#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "agentloop/orchestrator.hpp"

namespace agentloop::reward {

enum class AnswerType { FreeText, Numeric, MultipleChoice };

const char* answer_type_name(AnswerType t);

struct GroundTruth {
  std::string answer;
  std::vector<std::string> aliases;
  AnswerType answer_type = AnswerType::FreeText;
  double numeric_tolerance = 1e-6;  // relative
};

enum class JudgeKind { ExactNorm, NumericTol, ChoiceLetter };

const char* judge_kind_name(JudgeKind j);

struct RewardOptions {
  double format_penalty = -1.0;
  // Off by default: when non-zero, r_bonus = bonus for trajectories with at
  // least one executed tool call.  Kept out of total's r_acc/r_format split.
  double tool_use_bonus = 0.0;
};

struct RewardBreakdown {
  double r_acc = 0.0;     // 1 or 0
  double r_format = 0.0;  // 0 or format_penalty
  double r_bonus = 0.0;
  double total = 0.0;     // r_acc + r_format + r_bonus
  JudgeKind judge = JudgeKind::ExactNorm;
  std::string matched_against;  // alias or canonical answer that matched
  bool answered = false;        // an extractable answer existed
};

// Normalization pipeline for free-text comparison: lowercase, map '-' and
// '/' to spaces, delete other ASCII punctuation, drop article tokens
// (a/an/the), collapse whitespace.  Idempotent.
std::string normalize_answer(std::string_view text);

// First number in the text; commas are thousands separators.
std::optional<double> parse_leading_number(std::string_view text);
// First standalone letter token, uppercased ("(B)" -> 'B', "Answer: B" -> 'B').
std::optional<char> extract_choice_letter(std::string_view text);

// Candidate-level match, exposed for tests and dataset tooling.
bool answer_matches(std::string_view candidate, const GroundTruth& truth,
                    JudgeKind* judge_out = nullptr, std::string* matched_out = nullptr);

// 1.0 iff the trajectory's extracted answer matches the ground truth.
double accuracy_reward(const orchestrator::Trajectory& trajectory, const GroundTruth& truth);

// 0.0 iff every turn parses valid and the trajectory terminated Answered;
// otherwise options.format_penalty.
double format_reward(const orchestrator::Trajectory& trajectory,
                     const RewardOptions& options = {});

RewardBreakdown score(const orchestrator::Trajectory& trajectory, const GroundTruth& truth,
                      const RewardOptions& options = {});

GroundTruth ground_truth_from_json(const nlohmann::json& j);
nlohmann::json ground_truth_to_json(const GroundTruth& truth);

}  // namespace agentloop::reward
