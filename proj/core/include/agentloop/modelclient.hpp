#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace agentloop::model {

enum class Role { System, User, Assistant };

const char* role_name(Role role);

// Message content is a sequence of text runs and image references.  Images
// are indices into the trajectory's image table rather than inline bytes,
// so history stays cheap to copy and compare.
struct ContentPart {
  enum class Kind { Text, ImageRef };
  Kind kind = Kind::Text;
  std::string text;
  int image_index = -1;

  static ContentPart make_text(std::string t);
  static ContentPart make_image(int index);
};

struct ChatMessage {
  Role role = Role::User;
  std::vector<ContentPart> parts;

  static ChatMessage text(Role role, std::string body);
  std::string joined_text() const;  // text parts concatenated
};

struct GenerationBudget {
  int max_response_tokens = 16384;
  int max_turns = 10;
  double temperature = 1.0;
  std::optional<std::uint64_t> seed;
};

enum class FinishReason { Stop, Length, Error };

struct ModelTurn {
  std::string text;
  int token_count = 0;
  FinishReason finish_reason = FinishReason::Stop;
};

// Deterministic stand-in for a tokenizer: ceil(utf8_bytes / 4).
int estimate_tokens(std::string_view text);
// Cuts at the corresponding byte budget without splitting a UTF-8 sequence.
std::string truncate_to_tokens(std::string_view text, int max_tokens);

class ModelClient {
 public:
  virtual ~ModelClient() = default;

  // `image_table` resolves ContentPart image indices when a backend needs
  // the actual bytes.  Mocks ignore it.
  virtual ModelTurn generate_turn(const std::vector<ChatMessage>& history,
                                  const GenerationBudget& budget,
                                  const std::vector<std::string>& image_table) = 0;
};

// -- scripted mock -----------------------------------------------------------

// Plays back canned responses chosen by predicates over the history; the
// first matching step wins, otherwise default_response.  Responses still go
// through the token cap, so budget handling is exercised end to end.
class ScriptedModel : public ModelClient {
 public:
  using Predicate = std::function<bool(const std::vector<ChatMessage>&)>;

  struct Step {
    Predicate match;
    std::string response;
  };

  ScriptedModel() = default;
  explicit ScriptedModel(std::vector<Step> steps, std::string default_response = "");

  ScriptedModel& add_step(Predicate match, std::string response);
  ScriptedModel& set_default(std::string response);

  ModelTurn generate_turn(const std::vector<ChatMessage>& history,
                          const GenerationBudget& budget,
                          const std::vector<std::string>& image_table) override;

  int calls() const { return calls_; }

  // Step spec: [{"turn": 0, "respond": ...}, {"last_contains": ...,
  // "respond": ...}, {"question_contains": ...,  "respond": ...}];
  // "default" is the fallback response.
  static ScriptedModel from_json(const nlohmann::json& spec);

  // Predicate helpers.  turn_index counts assistant messages in history.
  static Predicate match_always();
  static Predicate match_turn_index(int index);
  static Predicate match_last_contains(std::string needle);
  static Predicate match_question_contains(std::string needle);

 private:
  std::vector<Step> steps_;
  std::string default_response_;
  int calls_ = 0;
};

// -- curation mock -----------------------------------------------------------

// Simulates a model whose correctness is prescribed per item and per rollout:
// rule r answers correctly on rollout k iff k is listed in the active pass
// set.  Rollouts are detected by fresh histories (no assistant turns yet);
// tool-phase scripts may emit scripted tool turns before answering.
class RolloutScriptModel : public ModelClient {
 public:
  struct ItemRule {
    std::string question_contains;  // picks the rule for a history
    std::string correct_answer;
    std::string wrong_answer = "unsure";
    std::vector<int> no_tool_pass;  // rollout indices answered correctly
    std::vector<int> tool_pass;
    std::vector<std::string> tool_turns;  // scripted turns before the answer
  };

  enum class Phase { NoTool, Tool };

  RolloutScriptModel(std::vector<ItemRule> rules, Phase phase);

  ModelTurn generate_turn(const std::vector<ChatMessage>& history,
                          const GenerationBudget& budget,
                          const std::vector<std::string>& image_table) override;

  // Spec: {"items": [{"question_contains": ..., "correct_answer": ...,
  // "no_tool_pass": [...], "tool_pass": [...], "tool_turns": [...]}]}
  static std::vector<ItemRule> rules_from_json(const nlohmann::json& spec);

 private:
  std::vector<ItemRule> rules_;
  Phase phase_;
  std::mutex mutex_;
  std::map<std::size_t, int> rollouts_started_;  // rule index -> count
  std::map<std::size_t, int> current_rollout_;
};

// -- HTTP backend ------------------------------------------------------------

struct HttpModelConfig {
  std::string endpoint;    // e.g. "http://host:8000/v1/chat/completions"
  std::string api_key;     // MODEL_API_KEY
  std::string model_name = "default";
  int max_retries = 3;
  int retry_backoff_ms = 250;
  int timeout_ms = 120000;
};

// OpenAI-style chat completions client; images are sent as base64 data URLs.
// Throws Error(EndpointUnreachable | AuthFailure | ContextOverflow).
class HttpModelClient : public ModelClient {
 public:
  explicit HttpModelClient(HttpModelConfig config);

  ModelTurn generate_turn(const std::vector<ChatMessage>& history,
                          const GenerationBudget& budget,
                          const std::vector<std::string>& image_table) override;

  static nlohmann::json build_request_body(const std::vector<ChatMessage>& history,
                                           const GenerationBudget& budget,
                                           const std::vector<std::string>& image_table,
                                           const std::string& model_name);

 private:
  HttpModelConfig config_;
};

// Loads a mock spec file: {"steps": ...} -> ScriptedModel; {"items": ...}
// -> RolloutScriptModel in the given phase.
std::unique_ptr<ModelClient> make_mock_from_file(const std::filesystem::path& path,
                                                 RolloutScriptModel::Phase phase);

}  // namespace agentloop::model
