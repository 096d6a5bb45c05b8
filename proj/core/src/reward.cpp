#include "agentloop/reward.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include "agentloop/util.hpp"

namespace agentloop::reward {

const char* answer_type_name(AnswerType t) {
  switch (t) {
    case AnswerType::FreeText: return "free_text";
    case AnswerType::Numeric: return "numeric";
    case AnswerType::MultipleChoice: return "multiple_choice";
  }
  return "?";
}

const char* judge_kind_name(JudgeKind j) {
  switch (j) {
    case JudgeKind::ExactNorm: return "ExactNorm";
    case JudgeKind::NumericTol: return "NumericTol";
    case JudgeKind::ChoiceLetter: return "ChoiceLetter";
  }
  return "?";
}

std::string normalize_answer(std::string_view text) {
  // Lowercase, hyphen/slash to space (keeps compound words comparable),
  // delete other ASCII punctuation, drop articles, collapse whitespace.
  std::string stripped;
  stripped.reserve(text.size());
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (c == '-' || c == '/') {
      stripped.push_back(' ');
    } else if (std::ispunct(u)) {
      // dropped
    } else {
      stripped.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  std::string out;
  for (const auto& token : split_whitespace(stripped)) {
    if (token == "a" || token == "an" || token == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += token;
  }
  return out;
}

std::optional<double> parse_leading_number(std::string_view text) {
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    bool digit_here = std::isdigit(static_cast<unsigned char>(c));
    bool sign_then_digit =
        (c == '-' || c == '+' || c == '.') && i + 1 < text.size() &&
        std::isdigit(static_cast<unsigned char>(text[i + 1]));
    if (!digit_here && !sign_then_digit) continue;
    // Collect the maximal numeric run, treating ',' as a thousands separator.
    std::string run;
    std::size_t j = i;
    while (j < text.size()) {
      char d = text[j];
      if (std::isdigit(static_cast<unsigned char>(d)) || d == '.' ||
          (j == i && (d == '-' || d == '+'))) {
        run.push_back(d);
      } else if (d == ',' && j + 1 < text.size() &&
                 std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
        // skip separator
      } else if ((d == 'e' || d == 'E') && j + 1 < text.size() &&
                 (std::isdigit(static_cast<unsigned char>(text[j + 1])) ||
                  ((text[j + 1] == '-' || text[j + 1] == '+') && j + 2 < text.size() &&
                   std::isdigit(static_cast<unsigned char>(text[j + 2]))))) {
        run.push_back('e');
        if (text[j + 1] == '-' || text[j + 1] == '+') run.push_back(text[++j]);
      } else {
        break;
      }
      ++j;
    }
    char* end = nullptr;
    double value = std::strtod(run.c_str(), &end);
    if (end != run.c_str()) return value;
  }
  return std::nullopt;
}

std::optional<char> extract_choice_letter(std::string_view text) {
  // First standalone single-letter token wins; separators are anything
  // non-alphanumeric, so "(B)", "B.", and "Answer: B" all yield 'B'.
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && std::isalnum(static_cast<unsigned char>(text[i]))) ++i;
    if (i - start == 1 && std::isalpha(static_cast<unsigned char>(text[start])))
      return static_cast<char>(std::toupper(static_cast<unsigned char>(text[start])));
  }
  return std::nullopt;
}

namespace {

bool numeric_close(double candidate, double truth, double tol) {
  if (truth == 0.0) return std::fabs(candidate) <= tol;
  return std::fabs(candidate - truth) <= tol * std::fabs(truth);
}

bool matches_one(std::string_view candidate, const std::string& truth_text,
                 const GroundTruth& truth) {
  switch (truth.answer_type) {
    case AnswerType::FreeText:
      return normalize_answer(candidate) == normalize_answer(truth_text);
    case AnswerType::Numeric: {
      auto a = parse_leading_number(candidate);
      auto b = parse_leading_number(truth_text);
      return a && b && numeric_close(*a, *b, truth.numeric_tolerance);
    }
    case AnswerType::MultipleChoice: {
      auto a = extract_choice_letter(candidate);
      auto b = extract_choice_letter(truth_text);
      return a && b && *a == *b;
    }
  }
  return false;
}

JudgeKind judge_for(AnswerType type) {
  switch (type) {
    case AnswerType::FreeText: return JudgeKind::ExactNorm;
    case AnswerType::Numeric: return JudgeKind::NumericTol;
    case AnswerType::MultipleChoice: return JudgeKind::ChoiceLetter;
  }
  return JudgeKind::ExactNorm;
}

}  // namespace

bool answer_matches(std::string_view candidate, const GroundTruth& truth,
                    JudgeKind* judge_out, std::string* matched_out) {
  if (judge_out) *judge_out = judge_for(truth.answer_type);
  if (matches_one(candidate, truth.answer, truth)) {
    if (matched_out) *matched_out = truth.answer;
    return true;
  }
  for (const auto& alias : truth.aliases) {
    if (matches_one(candidate, alias, truth)) {
      if (matched_out) *matched_out = alias;
      return true;
    }
  }
  return false;
}

// The grader reads the final turn's answer tag even when that turn breaks
// other format rules; format problems are penalized separately, so a correct
// but sloppily formatted rollout nets acc 1 + format -1 rather than 0 + -1.
static std::optional<std::string> graded_answer(const orchestrator::Trajectory& trajectory) {
  if (trajectory.turns.empty()) return std::nullopt;
  const auto* answer = trajectory.turns.back().parse.first_of(protocol::SegmentKind::Answer);
  if (!answer) return std::nullopt;
  return trim(answer->body);
}

double accuracy_reward(const orchestrator::Trajectory& trajectory, const GroundTruth& truth) {
  auto answer = graded_answer(trajectory);
  if (!answer) return 0.0;
  return answer_matches(*answer, truth) ? 1.0 : 0.0;
}

double format_reward(const orchestrator::Trajectory& trajectory, const RewardOptions& options) {
  bool valid = trajectory.termination == orchestrator::Termination::Answered;
  for (const auto& turn : trajectory.turns)
    if (!turn.parse.format_valid) valid = false;
  return valid ? 0.0 : options.format_penalty;
}

RewardBreakdown score(const orchestrator::Trajectory& trajectory, const GroundTruth& truth,
                      const RewardOptions& options) {
  RewardBreakdown b;
  b.judge = judge_for(truth.answer_type);
  auto answer = graded_answer(trajectory);
  b.answered = answer.has_value();
  if (answer && answer_matches(*answer, truth, &b.judge, &b.matched_against)) b.r_acc = 1.0;
  b.r_format = format_reward(trajectory, options);
  if (options.tool_use_bonus != 0.0) {
    bool used_tool = false;
    for (const auto& turn : trajectory.turns)
      for (const auto& ev : turn.events)
        if (!ev.refused) used_tool = true;
    if (used_tool) b.r_bonus = options.tool_use_bonus;
  }
  b.total = b.r_acc + b.r_format + b.r_bonus;
  return b;
}

GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  GroundTruth t;
  t.answer = j.value("answer", "");
  for (const auto& a : j.value("aliases", nlohmann::json::array()))
    t.aliases.push_back(a.get<std::string>());
  std::string type = j.value("answer_type", "free_text");
  if (type == "numeric")
    t.answer_type = AnswerType::Numeric;
  else if (type == "multiple_choice")
    t.answer_type = AnswerType::MultipleChoice;
  else
    t.answer_type = AnswerType::FreeText;
  t.numeric_tolerance = j.value("numeric_tolerance", 1e-6);
  return t;
}

nlohmann::json ground_truth_to_json(const GroundTruth& truth) {
  nlohmann::json j;
  j["answer"] = truth.answer;
  j["aliases"] = truth.aliases;
  j["answer_type"] = answer_type_name(truth.answer_type);
  j["numeric_tolerance"] = truth.numeric_tolerance;
  return j;
}

}  // namespace agentloop::reward
