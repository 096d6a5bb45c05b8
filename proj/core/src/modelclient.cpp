#include "agentloop/modelclient.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

#include <httplib.h>

#include "agentloop/errors.hpp"
#include "agentloop/util.hpp"

namespace agentloop::model {

using nlohmann::json;

const char* role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "?";
}

ContentPart ContentPart::make_text(std::string t) {
  ContentPart p;
  p.kind = Kind::Text;
  p.text = std::move(t);
  return p;
}

ContentPart ContentPart::make_image(int index) {
  ContentPart p;
  p.kind = Kind::ImageRef;
  p.image_index = index;
  return p;
}

ChatMessage ChatMessage::text(Role role, std::string body) {
  ChatMessage m;
  m.role = role;
  m.parts.push_back(ContentPart::make_text(std::move(body)));
  return m;
}

std::string ChatMessage::joined_text() const {
  std::string out;
  for (const auto& p : parts)
    if (p.kind == ContentPart::Kind::Text) out += p.text;
  return out;
}

int estimate_tokens(std::string_view text) {
  return static_cast<int>((text.size() + 3) / 4);
}

std::string truncate_to_tokens(std::string_view text, int max_tokens) {
  if (max_tokens <= 0) return "";
  std::size_t max_bytes = static_cast<std::size_t>(max_tokens) * 4;
  if (text.size() <= max_bytes) return std::string(text);
  std::size_t cut = max_bytes;
  // Never split a UTF-8 sequence: back off over continuation bytes.
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xc0) == 0x80) --cut;
  return std::string(text.substr(0, cut));
}

namespace {

ModelTurn budgeted_turn(std::string text, const GenerationBudget& budget) {
  ModelTurn t;
  t.text = std::move(text);
  t.token_count = estimate_tokens(t.text);
  if (budget.max_response_tokens > 0 && t.token_count > budget.max_response_tokens) {
    t.text = truncate_to_tokens(t.text, budget.max_response_tokens);
    t.token_count = estimate_tokens(t.text);
    t.finish_reason = FinishReason::Length;
  }
  return t;
}

int assistant_count(const std::vector<ChatMessage>& history) {
  int n = 0;
  for (const auto& m : history)
    if (m.role == Role::Assistant) ++n;
  return n;
}

}  // namespace

// -- ScriptedModel -----------------------------------------------------------

ScriptedModel::ScriptedModel(std::vector<Step> steps, std::string default_response)
    : steps_(std::move(steps)), default_response_(std::move(default_response)) {}

ScriptedModel& ScriptedModel::add_step(Predicate match, std::string response) {
  steps_.push_back({std::move(match), std::move(response)});
  return *this;
}

ScriptedModel& ScriptedModel::set_default(std::string response) {
  default_response_ = std::move(response);
  return *this;
}

ModelTurn ScriptedModel::generate_turn(const std::vector<ChatMessage>& history,
                                       const GenerationBudget& budget,
                                       const std::vector<std::string>&) {
  ++calls_;
  for (const auto& step : steps_)
    if (step.match(history)) return budgeted_turn(step.response, budget);
  return budgeted_turn(default_response_, budget);
}

ScriptedModel::Predicate ScriptedModel::match_always() {
  return [](const std::vector<ChatMessage>&) { return true; };
}

ScriptedModel::Predicate ScriptedModel::match_turn_index(int index) {
  return [index](const std::vector<ChatMessage>& history) {
    return assistant_count(history) == index;
  };
}

ScriptedModel::Predicate ScriptedModel::match_last_contains(std::string needle) {
  return [needle = std::move(needle)](const std::vector<ChatMessage>& history) {
    if (history.empty()) return false;
    return history.back().joined_text().find(needle) != std::string::npos;
  };
}

ScriptedModel::Predicate ScriptedModel::match_question_contains(std::string needle) {
  return [needle = std::move(needle)](const std::vector<ChatMessage>& history) {
    for (const auto& m : history)
      if (m.role == Role::User && m.joined_text().find(needle) != std::string::npos)
        return true;
    return false;
  };
}

ScriptedModel ScriptedModel::from_json(const json& spec) {
  ScriptedModel model;
  model.set_default(spec.value("default", ""));
  for (const auto& s : spec.value("steps", json::array())) {
    std::vector<Predicate> preds;
    if (s.contains("turn")) preds.push_back(match_turn_index(s["turn"].get<int>()));
    if (s.contains("last_contains"))
      preds.push_back(match_last_contains(s["last_contains"].get<std::string>()));
    if (s.contains("question_contains"))
      preds.push_back(match_question_contains(s["question_contains"].get<std::string>()));
    if (preds.empty()) preds.push_back(match_always());
    std::string response = s.value("respond", "");
    model.add_step(
        [preds](const std::vector<ChatMessage>& history) {
          for (const auto& p : preds)
            if (!p(history)) return false;
          return true;
        },
        std::move(response));
  }
  return model;
}

// -- RolloutScriptModel ------------------------------------------------------

RolloutScriptModel::RolloutScriptModel(std::vector<ItemRule> rules, Phase phase)
    : rules_(std::move(rules)), phase_(phase) {}

ModelTurn RolloutScriptModel::generate_turn(const std::vector<ChatMessage>& history,
                                            const GenerationBudget& budget,
                                            const std::vector<std::string>&) {
  // Locate the rule by scanning user messages for its question marker.
  std::size_t rule_idx = rules_.size();
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    for (const auto& m : history) {
      if (m.role == Role::User &&
          m.joined_text().find(rules_[i].question_contains) != std::string::npos) {
        rule_idx = i;
        break;
      }
    }
    if (rule_idx == i) break;
  }
  if (rule_idx == rules_.size())
    return budgeted_turn("<think>No rule matched this question.</think><answer>unknown</answer>",
                         budget);
  const ItemRule& rule = rules_[rule_idx];

  int turn_idx = assistant_count(history);
  int rollout;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (turn_idx == 0) current_rollout_[rule_idx] = rollouts_started_[rule_idx]++;
    rollout = current_rollout_[rule_idx];
  }

  const auto& pass = phase_ == Phase::NoTool ? rule.no_tool_pass : rule.tool_pass;
  bool correct = std::find(pass.begin(), pass.end(), rollout) != pass.end();

  if (phase_ == Phase::Tool && turn_idx < static_cast<int>(rule.tool_turns.size()))
    return budgeted_turn(rule.tool_turns[turn_idx], budget);

  const std::string& answer = correct ? rule.correct_answer : rule.wrong_answer;
  return budgeted_turn("<think>Committing to an answer.</think><answer>" + answer + "</answer>",
                       budget);
}

std::vector<RolloutScriptModel::ItemRule> RolloutScriptModel::rules_from_json(const json& spec) {
  std::vector<ItemRule> rules;
  for (const auto& item : spec.value("items", json::array())) {
    ItemRule rule;
    rule.question_contains = item.value("question_contains", "");
    rule.correct_answer = item.value("correct_answer", "");
    rule.wrong_answer = item.value("wrong_answer", "unsure");
    for (const auto& k : item.value("no_tool_pass", json::array()))
      rule.no_tool_pass.push_back(k.get<int>());
    for (const auto& k : item.value("tool_pass", json::array()))
      rule.tool_pass.push_back(k.get<int>());
    for (const auto& t : item.value("tool_turns", json::array()))
      rule.tool_turns.push_back(t.get<std::string>());
    rules.push_back(std::move(rule));
  }
  return rules;
}

// -- HttpModelClient ---------------------------------------------------------

HttpModelClient::HttpModelClient(HttpModelConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty())
    throw Error(ErrorCode::ConfigError, "model endpoint is empty");
}

json HttpModelClient::build_request_body(const std::vector<ChatMessage>& history,
                                         const GenerationBudget& budget,
                                         const std::vector<std::string>& image_table,
                                         const std::string& model_name) {
  json messages = json::array();
  for (const auto& m : history) {
    json content = json::array();
    for (const auto& p : m.parts) {
      if (p.kind == ContentPart::Kind::Text) {
        content.push_back({{"type", "text"}, {"text", p.text}});
      } else {
        if (p.image_index < 0 || p.image_index >= static_cast<int>(image_table.size()))
          throw Error(ErrorCode::Precondition,
                      "image reference out of range: " + std::to_string(p.image_index));
        content.push_back(
            {{"type", "image_url"},
             {"image_url",
              {{"url",
                "data:image/png;base64," + base64_encode(image_table[p.image_index])}}}});
      }
    }
    // Text-only messages use the plain-string form for wider API
    // compatibility; the parts array is only needed once images appear.
    bool text_only = true;
    for (const auto& p : m.parts)
      if (p.kind != ContentPart::Kind::Text) text_only = false;
    if (text_only) {
      std::string flat;
      for (const auto& p : m.parts) flat += p.text;
      messages.push_back({{"role", role_name(m.role)}, {"content", std::move(flat)}});
    } else {
      messages.push_back({{"role", role_name(m.role)}, {"content", std::move(content)}});
    }
  }
  json body = {{"model", model_name},
               {"messages", std::move(messages)},
               {"max_tokens", budget.max_response_tokens},
               {"temperature", budget.temperature}};
  if (budget.seed) body["seed"] = *budget.seed;
  return body;
}

namespace {

// Splits "http://host:port/path" into client base and request path.
std::pair<std::string, std::string> split_endpoint(const std::string& endpoint) {
  auto scheme_end = endpoint.find("://");
  std::size_t authority_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto path_start = endpoint.find('/', authority_start);
  if (path_start == std::string::npos) return {endpoint, "/v1/chat/completions"};
  return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

}  // namespace

ModelTurn HttpModelClient::generate_turn(const std::vector<ChatMessage>& history,
                                         const GenerationBudget& budget,
                                         const std::vector<std::string>& image_table) {
  auto [base, path] = split_endpoint(config_.endpoint);
  json body = build_request_body(history, budget, image_table, config_.model_name);
  std::string payload = body.dump();

  httplib::Client cli(base);
  cli.set_connection_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  cli.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
  httplib::Headers headers;
  if (!config_.api_key.empty())
    headers.emplace("Authorization", "Bearer " + config_.api_key);

  httplib::Result res;
  for (int attempt = 0;; ++attempt) {
    res = cli.Post(path, headers, payload, "application/json");
    bool retryable = !res || res->status >= 500;
    if (!retryable || attempt >= config_.max_retries) break;
    std::this_thread::sleep_for(
        std::chrono::milliseconds(config_.retry_backoff_ms * (1 << attempt)));
  }

  if (!res)
    throw Error(ErrorCode::EndpointUnreachable,
                "model endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status == 401 || res->status == 403)
    throw Error(ErrorCode::AuthFailure,
                "model endpoint rejected credentials (HTTP " + std::to_string(res->status) +
                    ")");
  if (res->status == 413 ||
      (res->status == 400 && res->body.find("context") != std::string::npos))
    throw Error(ErrorCode::ContextOverflow, "model request exceeded the context window");
  if (res->status != 200)
    throw Error(ErrorCode::EndpointUnreachable,
                "model endpoint HTTP " + std::to_string(res->status));

  json j = json::parse(res->body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.contains("choices") || j["choices"].empty())
    throw Error(ErrorCode::EndpointUnreachable, "model endpoint returned malformed JSON");
  const json& choice = j["choices"][0];

  ModelTurn t;
  const json& message = choice.value("message", json::object());
  if (message.value("content", json()).is_string())
    t.text = message["content"].get<std::string>();
  t.token_count = j.value("usage", json::object()).value("completion_tokens", 0);
  if (t.token_count == 0) t.token_count = estimate_tokens(t.text);
  t.finish_reason = choice.value("finish_reason", "stop") == "length" ? FinishReason::Length
                                                                      : FinishReason::Stop;
  return t;
}

std::unique_ptr<ModelClient> make_mock_from_file(const std::filesystem::path& path,
                                                 RolloutScriptModel::Phase phase) {
  json spec = json::parse(read_file(path), nullptr, /*allow_exceptions=*/false);
  if (spec.is_discarded() || !spec.is_object())
    throw Error(ErrorCode::SchemaMismatch, "malformed mock spec: " + path.string());
  if (spec.contains("items"))
    return std::make_unique<RolloutScriptModel>(RolloutScriptModel::rules_from_json(spec),
                                                phase);
  return std::make_unique<ScriptedModel>(ScriptedModel::from_json(spec));
}

}  // namespace agentloop::model
