#include "agentloop/orchestrator.hpp"

#include <chrono>

#include "agentloop/blob_store.hpp"
#include "agentloop/errors.hpp"
#include "agentloop/prompts.hpp"
#include "agentloop/util.hpp"

namespace agentloop::orchestrator {

using nlohmann::json;

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Answered: return "Answered";
    case Termination::TurnBudget: return "TurnBudget";
    case Termination::TokenBudget: return "TokenBudget";
    case Termination::FormatFailure: return "FormatFailure";
    case Termination::ToolFailure: return "ToolFailure";
  }
  return "?";
}

const char* tool_kind_name(ToolKind k) {
  switch (k) {
    case ToolKind::CodeExec: return "CodeExec";
    case ToolKind::ImageSearch: return "ImageSearch";
    case ToolKind::TextSearch: return "TextSearch";
  }
  return "?";
}

namespace {

// Refusal texts are policy outputs the model reads; fixed strings keep
// trajectories reproducible.
constexpr const char* kRefusalImageSearchUsed =
    "Image search has already been used and cannot be called again.";
constexpr const char* kRefusalImageSearchOff =
    "Image search is not available for this task.";
constexpr const char* kRefusalTextSearchOff =
    "Text search is not available for this task.";
constexpr const char* kRefusalCodeOff =
    "The python tool is not available for this task.";
constexpr const char* kRefusalNoInputImage =
    "There is no input image to perform an image search with.";

json budget_to_json(const model::GenerationBudget& b) {
  json j = {{"max_response_tokens", b.max_response_tokens},
            {"max_turns", b.max_turns},
            {"temperature", b.temperature}};
  if (b.seed)
    j["seed"] = *b.seed;
  else
    j["seed"] = nullptr;
  return j;
}

model::GenerationBudget budget_from_json(const json& j) {
  model::GenerationBudget b;
  b.max_response_tokens = j.value("max_response_tokens", b.max_response_tokens);
  b.max_turns = j.value("max_turns", b.max_turns);
  b.temperature = j.value("temperature", b.temperature);
  if (j.contains("seed") && !j["seed"].is_null())
    b.seed = j["seed"].get<std::uint64_t>();
  return b;
}

json policy_to_json(const LoopPolicy& p) {
  return {{"allow_code", p.allow_code},
          {"allow_text_search", p.allow_text_search},
          {"allow_image_search", p.allow_image_search},
          {"max_format_retries", p.max_format_retries},
          {"strict_tool_errors", p.strict_tool_errors}};
}

LoopPolicy policy_from_json(const json& j) {
  LoopPolicy p;
  p.allow_code = j.value("allow_code", p.allow_code);
  p.allow_text_search = j.value("allow_text_search", p.allow_text_search);
  p.allow_image_search = j.value("allow_image_search", p.allow_image_search);
  p.max_format_retries = j.value("max_format_retries", p.max_format_retries);
  p.strict_tool_errors = j.value("strict_tool_errors", p.strict_tool_errors);
  return p;
}

json exec_result_to_json(const sandbox::ExecResult& r, Trajectory& traj,
                         std::vector<int>* attachment_indices) {
  json images = json::array();
  for (const auto& png : r.images) {
    attachment_indices->push_back(static_cast<int>(traj.images.size()));
    images.push_back(sha256_hex(png));
    traj.images.push_back(png);
  }
  return {{"stdout", r.stdout_text},
          {"stderr", r.stderr_text},
          {"images", std::move(images)},
          {"status", sandbox::exec_status_name(r.status)},
          {"wall_seconds", r.wall_seconds},
          {"state_reset", r.state_reset}};
}

json search_response_to_json(const search::SearchResponse& r, Trajectory& traj,
                             std::vector<int>* attachment_indices) {
  json results = json::array();
  for (const auto& e : r.results) {
    json entry = {{"title", e.title}, {"link", e.link}, {"snippet", e.snippet}};
    if (!e.thumbnail_png.empty()) {
      attachment_indices->push_back(static_cast<int>(traj.images.size()));
      entry["thumbnail"] = sha256_hex(e.thumbnail_png);
      traj.images.push_back(e.thumbnail_png);
    } else {
      entry["thumbnail"] = "";
    }
    results.push_back(std::move(entry));
  }
  json j = {{"kind", r.kind == search::QueryKind::Image ? "image" : "text"},
            {"results", std::move(results)},
            {"latency_seconds", r.latency_seconds},
            {"from_replay", r.from_replay},
            {"replay_key", r.replay_key}};
  if (r.query) j["query"] = *r.query;
  return j;
}

ToolEvent make_refusal(ToolKind kind, std::string reason, json request) {
  ToolEvent ev;
  ev.kind = kind;
  ev.refused = true;
  ev.refusal_reason = reason;
  ev.request = std::move(request);
  ev.result = nullptr;
  ev.observation.kind = kind == ToolKind::CodeExec
                            ? protocol::ObservationKind::CodeResult
                            : (kind == ToolKind::ImageSearch
                                   ? protocol::ObservationKind::ImageSearchResult
                                   : protocol::ObservationKind::TextSearchResult);
  ev.observation.text = std::move(reason);
  return ev;
}

model::ChatMessage observation_message(const Observation& obs) {
  model::ChatMessage msg;
  msg.role = model::Role::User;
  msg.parts.push_back(model::ContentPart::make_text(obs.text));
  for (int idx : obs.attachments)
    msg.parts.push_back(model::ContentPart::make_image(idx));
  return msg;
}

std::int64_t unix_ms_now() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

}  // namespace

Trajectory run(const RunRequest& request, model::ModelClient& model, ToolBelt& tools) {
  Trajectory traj;
  traj.id = request.id;
  traj.question = request.question;
  traj.images = request.input_images_png;
  traj.input_image_count = static_cast<int>(request.input_images_png.size());
  traj.timing.started_unix_ms = unix_ms_now();
  traj.config = {{"budget", budget_to_json(request.budget)},
                 {"policy", policy_to_json(request.policy)}};
  auto t0 = std::chrono::steady_clock::now();

  const LoopPolicy& policy = request.policy;

  std::vector<model::ChatMessage> history;
  history.push_back(
      model::ChatMessage::text(model::Role::System, std::string(prompts::system_prompt())));
  {
    model::ChatMessage user;
    user.role = model::Role::User;
    for (int i = 0; i < traj.input_image_count; ++i)
      user.parts.push_back(model::ContentPart::make_image(i));
    user.parts.push_back(
        model::ContentPart::make_text(prompts::render_user_prompt(request.question)));
    history.push_back(std::move(user));
  }

  std::unique_ptr<sandbox::Session> session;  // opened on the first code turn
  int consecutive_invalid = 0;
  bool done = false;

  for (int turn_i = 0; turn_i < request.budget.max_turns && !done; ++turn_i) {
    model::ModelTurn mt = model.generate_turn(history, request.budget, traj.images);
    TurnRecord rec;
    rec.text = mt.text;
    rec.token_count = mt.token_count;
    rec.parse = protocol::parse_turn(mt.text);
    history.push_back(model::ChatMessage::text(model::Role::Assistant, mt.text));

    if (mt.finish_reason == model::FinishReason::Length) {
      traj.termination = Termination::TokenBudget;
      traj.turns.push_back(std::move(rec));
      break;
    }

    if (!rec.parse.format_valid) {
      ++consecutive_invalid;
      if (consecutive_invalid > policy.max_format_retries) {
        traj.termination = Termination::FormatFailure;
        traj.turns.push_back(std::move(rec));
        break;
      }
      rec.corrective = std::string(prompts::format_corrective_message());
      history.push_back(model::ChatMessage::text(model::Role::User, *rec.corrective));
      traj.turns.push_back(std::move(rec));
      continue;
    }
    consecutive_invalid = 0;

    if (auto answer = protocol::extract_answer(rec.parse)) {
      traj.final_answer = *answer;
      traj.termination = Termination::Answered;
      traj.turns.push_back(std::move(rec));
      done = true;
      break;
    }

    // A valid non-answer turn carries exactly one tool kind; run each
    // segment in order and inject one observation message per event.
    for (const auto& seg : rec.parse.segments) {
      if (seg.kind == protocol::SegmentKind::Code) {
        json request_json = {{"source", seg.body}};
        if (!policy.allow_code) {
          rec.events.push_back(
              make_refusal(ToolKind::CodeExec, kRefusalCodeOff, request_json));
          continue;
        }
        ToolEvent ev;
        ev.kind = ToolKind::CodeExec;
        ev.request = request_json;
        ev.code_class = sandbox::classify_code(seg.body);
        try {
          if (!session) {
            std::vector<std::string> input_images(
                traj.images.begin(), traj.images.begin() + traj.input_image_count);
            session = std::make_unique<sandbox::Session>(std::move(input_images),
                                                         tools.sandbox_config);
          }
          sandbox::ExecResult result = session->execute(seg.body);
          protocol::CodeResultPayload payload{result.stdout_text, result.stderr_text,
                                              result.images};
          ev.result = exec_result_to_json(result, traj, &ev.observation.attachments);
          auto rendered = protocol::render_code_result(payload);
          ev.observation.kind = rendered.kind;
          ev.observation.text = rendered.text;
          traj.counters.code_execs += 1;
        } catch (const Error& e) {
          if (policy.strict_tool_errors) throw;
          ev.result = {{"error", e.what()}};
          ev.observation.kind = protocol::ObservationKind::CodeResult;
          ev.observation.text = std::string("Tool failure: ") + e.what();
          traj.termination = Termination::ToolFailure;
          done = true;
        }
        rec.events.push_back(std::move(ev));
        if (done) break;
      } else if (seg.kind == protocol::SegmentKind::ToolCall) {
        auto call = protocol::parse_tool_call(seg.body);
        json request_json = json::parse(seg.body, nullptr, false);
        if (request_json.is_discarded()) request_json = {{"raw", seg.body}};
        if (call->name == "image_search") {
          if (!policy.allow_image_search) {
            rec.events.push_back(
                make_refusal(ToolKind::ImageSearch, kRefusalImageSearchOff, request_json));
            continue;
          }
          if (traj.counters.image_searches >= 1) {
            rec.events.push_back(
                make_refusal(ToolKind::ImageSearch, kRefusalImageSearchUsed, request_json));
            continue;
          }
          if (traj.input_image_count == 0) {
            rec.events.push_back(
                make_refusal(ToolKind::ImageSearch, kRefusalNoInputImage, request_json));
            continue;
          }
          ToolEvent ev;
          ev.kind = ToolKind::ImageSearch;
          ev.request = request_json;
          try {
            if (!tools.search)
              throw Error(ErrorCode::ConfigError, "no search client configured");
            // Image search always uses the original first input image.
            search::SearchResponse resp = tools.search->image_search(traj.images[0]);
            ev.result = search_response_to_json(resp, traj, &ev.observation.attachments);
            auto rendered = protocol::render_image_search_result(resp.results);
            ev.observation.kind = rendered.kind;
            ev.observation.text = rendered.text;
            traj.counters.image_searches += 1;
          } catch (const Error& e) {
            if (policy.strict_tool_errors) throw;
            ev.result = {{"error", e.what()}};
            ev.observation.kind = protocol::ObservationKind::ImageSearchResult;
            ev.observation.text = std::string("Tool failure: ") + e.what();
            traj.termination = Termination::ToolFailure;
            done = true;
          }
          rec.events.push_back(std::move(ev));
          if (done) break;
        } else {
          if (!policy.allow_text_search) {
            rec.events.push_back(
                make_refusal(ToolKind::TextSearch, kRefusalTextSearchOff, request_json));
            continue;
          }
          ToolEvent ev;
          ev.kind = ToolKind::TextSearch;
          ev.request = request_json;
          try {
            if (!tools.search)
              throw Error(ErrorCode::ConfigError, "no search client configured");
            search::SearchResponse resp = tools.search->text_search(*call->query);
            ev.result = search_response_to_json(resp, traj, &ev.observation.attachments);
            auto rendered = protocol::render_text_search_result(*call->query, resp.results);
            ev.observation.kind = rendered.kind;
            ev.observation.text = rendered.text;
            traj.counters.text_searches += 1;
          } catch (const Error& e) {
            if (policy.strict_tool_errors) throw;
            ev.result = {{"error", e.what()}};
            ev.observation.kind = protocol::ObservationKind::TextSearchResult;
            ev.observation.text = std::string("Tool failure: ") + e.what();
            traj.termination = Termination::ToolFailure;
            done = true;
          }
          rec.events.push_back(std::move(ev));
          if (done) break;
        }
      }
    }

    for (const auto& ev : rec.events)
      history.push_back(observation_message(ev.observation));
    traj.turns.push_back(std::move(rec));
  }

  traj.timing.wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
  return traj;
}

std::optional<std::string> extract_answer(const Trajectory& trajectory) {
  if (trajectory.turns.empty()) return std::nullopt;
  return protocol::extract_answer(trajectory.turns.back().parse);
}

ReplayResult replay(const Trajectory& record, ToolBelt& tools) {
  model::ScriptedModel script;
  for (std::size_t i = 0; i < record.turns.size(); ++i)
    script.add_step(model::ScriptedModel::match_turn_index(static_cast<int>(i)),
                    record.turns[i].text);

  RunRequest req;
  req.id = record.id;
  req.question = record.question;
  req.input_images_png.assign(record.images.begin(),
                              record.images.begin() + record.input_image_count);
  req.budget = budget_from_json(record.config.value("budget", json::object()));
  req.policy = policy_from_json(record.config.value("policy", json::object()));
  req.policy.strict_tool_errors = true;  // fixture gaps must surface, not degrade

  ReplayResult out{run(req, script, tools), std::nullopt};
  out.divergence = first_divergence(record, out.regenerated);
  return out;
}

}  // namespace agentloop::orchestrator
