#include <algorithm>
#include <set>

#include "agentloop/blob_store.hpp"
#include "agentloop/errors.hpp"
#include "agentloop/orchestrator.hpp"
#include "agentloop/util.hpp"

namespace agentloop::orchestrator {

using nlohmann::json;

namespace {

constexpr int kSchemaVersion = 1;

const char* observation_kind_name(protocol::ObservationKind k) {
  switch (k) {
    case protocol::ObservationKind::CodeResult: return "CodeResult";
    case protocol::ObservationKind::ImageSearchResult: return "ImageSearchResult";
    case protocol::ObservationKind::TextSearchResult: return "TextSearchResult";
  }
  return "?";
}

protocol::ObservationKind observation_kind_from(const std::string& name) {
  if (name == "ImageSearchResult") return protocol::ObservationKind::ImageSearchResult;
  if (name == "TextSearchResult") return protocol::ObservationKind::TextSearchResult;
  return protocol::ObservationKind::CodeResult;
}

Termination termination_from(const std::string& name) {
  if (name == "Answered") return Termination::Answered;
  if (name == "TokenBudget") return Termination::TokenBudget;
  if (name == "FormatFailure") return Termination::FormatFailure;
  if (name == "ToolFailure") return Termination::ToolFailure;
  return Termination::TurnBudget;
}

ToolKind tool_kind_from(const std::string& name) {
  if (name == "ImageSearch") return ToolKind::ImageSearch;
  if (name == "TextSearch") return ToolKind::TextSearch;
  return ToolKind::CodeExec;
}

protocol::SegmentKind segment_kind_from(const std::string& name) {
  if (name == "code") return protocol::SegmentKind::Code;
  if (name == "tool_call") return protocol::SegmentKind::ToolCall;
  if (name == "answer") return protocol::SegmentKind::Answer;
  return protocol::SegmentKind::Think;
}

protocol::Violation violation_from(const std::string& name) {
  using V = protocol::Violation;
  if (name == "UnclosedTag") return V::UnclosedTag;
  if (name == "NestedTag") return V::NestedTag;
  if (name == "StrayText") return V::StrayText;
  if (name == "MultipleToolKinds") return V::MultipleToolKinds;
  if (name == "MissingThink") return V::MissingThink;
  if (name == "EmptyAnswer") return V::EmptyAnswer;
  return V::MalformedToolJson;
}

sandbox::CodeClass code_class_from(const std::string& name) {
  using C = sandbox::CodeClass;
  if (name == "Crop") return C::Crop;
  if (name == "NumericalAnalysis") return C::NumericalAnalysis;
  if (name == "Mark") return C::Mark;
  return C::Other;
}

json parse_to_json(const protocol::TurnParse& parse) {
  json segments = json::array();
  for (const auto& s : parse.segments)
    segments.push_back({{"kind", protocol::segment_kind_name(s.kind)},
                        {"body", s.body},
                        {"span_begin", s.span_begin},
                        {"span_end", s.span_end}});
  json violations = json::array();
  for (auto v : parse.violations) violations.push_back(protocol::violation_name(v));
  return {{"segments", std::move(segments)},
          {"violations", std::move(violations)},
          {"format_valid", parse.format_valid}};
}

protocol::TurnParse parse_from_json(const json& j) {
  protocol::TurnParse p;
  for (const auto& s : j.value("segments", json::array())) {
    protocol::Segment seg;
    seg.kind = segment_kind_from(s.value("kind", "think"));
    seg.body = s.value("body", "");
    seg.span_begin = s.value("span_begin", 0u);
    seg.span_end = s.value("span_end", 0u);
    p.segments.push_back(std::move(seg));
  }
  for (const auto& v : j.value("violations", json::array()))
    p.violations.push_back(violation_from(v.get<std::string>()));
  p.format_valid = j.value("format_valid", false);
  return p;
}

json event_to_json(const ToolEvent& ev) {
  json j;
  j["kind"] = tool_kind_name(ev.kind);
  j["refused"] = ev.refused;
  j["refusal_reason"] = ev.refusal_reason;
  j["request"] = ev.request;
  j["result"] = ev.result;
  j["observation"] = {{"kind", observation_kind_name(ev.observation.kind)},
                      {"text", ev.observation.text},
                      {"attachments", ev.observation.attachments}};
  if (ev.code_class)
    j["code_class"] = sandbox::code_class_name(*ev.code_class);
  else
    j["code_class"] = nullptr;
  return j;
}

ToolEvent event_from_json(const json& j) {
  ToolEvent ev;
  ev.kind = tool_kind_from(j.value("kind", "CodeExec"));
  ev.refused = j.value("refused", false);
  ev.refusal_reason = j.value("refusal_reason", "");
  ev.request = j.value("request", json());
  ev.result = j.value("result", json());
  const json& obs = j.value("observation", json::object());
  ev.observation.kind = observation_kind_from(obs.value("kind", "CodeResult"));
  ev.observation.text = obs.value("text", "");
  for (const auto& a : obs.value("attachments", json::array()))
    ev.observation.attachments.push_back(a.get<int>());
  if (j.contains("code_class") && !j["code_class"].is_null())
    ev.code_class = code_class_from(j["code_class"].get<std::string>());
  return ev;
}

// Keys owned by the schema; anything else round-trips through `extra`.
const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "schema_version", "id",          "question",   "images",
      "input_image_count", "turns",    "final_answer", "termination",
      "counters",       "timing",      "config"};
  return keys;
}

}  // namespace

json trajectory_to_json(const Trajectory& traj) {
  json j;
  j["schema_version"] = kSchemaVersion;
  j["id"] = traj.id;
  j["question"] = traj.question;
  json images = json::array();
  for (const auto& png : traj.images) images.push_back(sha256_hex(png));
  j["images"] = std::move(images);
  j["input_image_count"] = traj.input_image_count;
  json turns = json::array();
  for (const auto& turn : traj.turns) {
    json t;
    t["text"] = turn.text;
    t["token_count"] = turn.token_count;
    t["parse"] = parse_to_json(turn.parse);
    json events = json::array();
    for (const auto& ev : turn.events) events.push_back(event_to_json(ev));
    t["events"] = std::move(events);
    if (turn.corrective)
      t["corrective"] = *turn.corrective;
    else
      t["corrective"] = nullptr;
    turns.push_back(std::move(t));
  }
  j["turns"] = std::move(turns);
  if (traj.final_answer)
    j["final_answer"] = *traj.final_answer;
  else
    j["final_answer"] = nullptr;
  j["termination"] = termination_name(traj.termination);
  j["counters"] = {{"code_execs", traj.counters.code_execs},
                   {"text_searches", traj.counters.text_searches},
                   {"image_searches", traj.counters.image_searches}};
  j["timing"] = {{"started_unix_ms", traj.timing.started_unix_ms},
                 {"wall_ms", traj.timing.wall_ms}};
  j["config"] = traj.config;
  for (auto it = traj.extra.begin(); it != traj.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

Trajectory trajectory_from_json(const json& j, const BlobStore* blobs) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaMismatch, "trajectory is not an object");
  int version = j.value("schema_version", -1);
  if (version != kSchemaVersion)
    throw Error(ErrorCode::SchemaMismatch,
                "unsupported trajectory schema_version " + std::to_string(version));
  Trajectory traj;
  traj.id = j.value("id", "");
  traj.question = j.value("question", "");
  for (const auto& key : j.value("images", json::array())) {
    if (!blobs)
      throw Error(ErrorCode::Precondition, "trajectory has images but no blob store given");
    traj.images.push_back(blobs->get(key.get<std::string>()));
  }
  traj.input_image_count = j.value("input_image_count", 0);
  for (const auto& t : j.value("turns", json::array())) {
    TurnRecord rec;
    rec.text = t.value("text", "");
    rec.token_count = t.value("token_count", 0);
    rec.parse = parse_from_json(t.value("parse", json::object()));
    for (const auto& e : t.value("events", json::array()))
      rec.events.push_back(event_from_json(e));
    if (t.contains("corrective") && !t["corrective"].is_null())
      rec.corrective = t["corrective"].get<std::string>();
    traj.turns.push_back(std::move(rec));
  }
  if (j.contains("final_answer") && !j["final_answer"].is_null())
    traj.final_answer = j["final_answer"].get<std::string>();
  traj.termination = termination_from(j.value("termination", "TurnBudget"));
  const json& counters = j.value("counters", json::object());
  traj.counters.code_execs = counters.value("code_execs", 0);
  traj.counters.text_searches = counters.value("text_searches", 0);
  traj.counters.image_searches = counters.value("image_searches", 0);
  const json& timing = j.value("timing", json::object());
  traj.timing.started_unix_ms = timing.value("started_unix_ms", std::int64_t{0});
  traj.timing.wall_ms = timing.value("wall_ms", std::int64_t{0});
  traj.config = j.value("config", json::object());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known_keys().count(it.key())) traj.extra[it.key()] = it.value();
  return traj;
}

std::string serialize(const Trajectory& trajectory, BlobStore& blobs) {
  for (const auto& png : trajectory.images) blobs.put(png);
  return trajectory_to_json(trajectory).dump();
}

Trajectory deserialize(std::string_view line, const BlobStore& blobs) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::SchemaMismatch,
                "truncated or malformed trajectory line at byte " + std::to_string(e.byte) +
                    ": " + e.what());
  }
  return trajectory_from_json(j, &blobs);
}

Trajectory normalized_for_compare(const Trajectory& trajectory) {
  Trajectory t = trajectory;
  t.timing = Timing{};
  // Tool latencies, replay markers, and harness strictness are run
  // artifacts, not semantic content.
  for (auto& turn : t.turns) {
    for (auto& ev : turn.events) {
      if (ev.result.is_object()) {
        if (ev.result.contains("wall_seconds")) ev.result["wall_seconds"] = 0.0;
        if (ev.result.contains("latency_seconds")) ev.result["latency_seconds"] = 0.0;
        if (ev.result.contains("from_replay")) ev.result["from_replay"] = false;
      }
    }
  }
  if (t.config.contains("policy") && t.config["policy"].is_object())
    t.config["policy"]["strict_tool_errors"] = false;
  return t;
}

bool equal_ignoring_timing(const Trajectory& a, const Trajectory& b) {
  return trajectory_to_json(normalized_for_compare(a)) ==
         trajectory_to_json(normalized_for_compare(b));
}

std::optional<Divergence> first_divergence(const Trajectory& a, const Trajectory& b) {
  json ja = trajectory_to_json(normalized_for_compare(a));
  json jb = trajectory_to_json(normalized_for_compare(b));
  if (ja == jb) return std::nullopt;

  const json& ta = ja["turns"];
  const json& tb = jb["turns"];
  std::size_t n = std::min(ta.size(), tb.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (ta[i] == tb[i]) continue;
    for (const char* field : {"text", "token_count", "parse", "events", "corrective"}) {
      if (ta[i].value(field, json()) != tb[i].value(field, json())) {
        Divergence d;
        d.turn_index = static_cast<int>(i);
        d.field = field;
        d.detail = "recorded " + ta[i].value(field, json()).dump().substr(0, 200) +
                   " vs regenerated " + tb[i].value(field, json()).dump().substr(0, 200);
        return d;
      }
    }
  }
  if (ta.size() != tb.size()) {
    Divergence d;
    d.turn_index = static_cast<int>(n);
    d.field = "turn_count";
    d.detail = "recorded " + std::to_string(ta.size()) + " turns vs regenerated " +
               std::to_string(tb.size());
    return d;
  }
  // Difference is outside the turn list (termination, counters, images...).
  for (auto it = ja.begin(); it != ja.end(); ++it) {
    if (it.key() == "turns") continue;
    if (!jb.contains(it.key()) || jb[it.key()] != it.value()) {
      Divergence d;
      d.turn_index = -1;
      d.field = it.key();
      d.detail = "recorded " + it.value().dump().substr(0, 200) + " vs regenerated " +
                 (jb.contains(it.key()) ? jb[it.key()].dump().substr(0, 200) : "<missing>");
      return d;
    }
  }
  Divergence d;
  d.turn_index = -1;
  d.field = "unknown";
  d.detail = "trajectories differ";
  return d;
}

}  // namespace agentloop::orchestrator
