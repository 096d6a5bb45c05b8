#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "agentloop/modelclient.hpp"
#include "agentloop/protocol.hpp"
#include "agentloop/sandbox.hpp"
#include "agentloop/search.hpp"

namespace agentloop {
class BlobStore;
}

namespace agentloop::orchestrator {

enum class Termination {
  Answered,       // valid <answer> emitted
  TurnBudget,     // max_turns reached without an answer
  TokenBudget,    // model hit the response token cap
  FormatFailure,  // invalid turns survived the corrective retry
  ToolFailure,    // a tool raised a non-recoverable error
};

const char* termination_name(Termination t);

enum class ToolKind { CodeExec, ImageSearch, TextSearch };

const char* tool_kind_name(ToolKind k);

struct Observation {
  protocol::ObservationKind kind = protocol::ObservationKind::CodeResult;
  std::string text;
  std::vector<int> attachments;  // indices into Trajectory::images
};

// One tool attempt inside a turn, in injection order.  Refused attempts keep
// their position but carry a policy reason instead of an executed result.
struct ToolEvent {
  ToolKind kind = ToolKind::CodeExec;
  bool refused = false;
  std::string refusal_reason;       // set iff refused
  nlohmann::json request;           // code source or tool-call JSON
  nlohmann::json result;            // executed result; null when refused
  Observation observation;          // the user message injected back
  std::optional<sandbox::CodeClass> code_class;  // CodeExec only
};

struct TurnRecord {
  std::string text;       // raw model output
  int token_count = 0;
  protocol::TurnParse parse;
  std::vector<ToolEvent> events;
  std::optional<std::string> corrective;  // format retry message, if injected
};

// Executed tool attempts only; refusals are visible in the event list but
// never count here.
struct ToolCounters {
  int code_execs = 0;
  int text_searches = 0;
  int image_searches = 0;  // invariant: <= 1 per trajectory
};

struct Timing {
  std::int64_t started_unix_ms = 0;
  std::int64_t wall_ms = 0;
};

struct Trajectory {
  std::string id;
  std::string question;
  // Flat image table: input images first, then observation attachments in
  // the order they were produced.  Raw PNG bytes in memory; hashes on disk.
  std::vector<std::string> images;
  int input_image_count = 0;
  std::vector<TurnRecord> turns;
  std::optional<std::string> final_answer;
  Termination termination = Termination::TurnBudget;
  ToolCounters counters;
  Timing timing;
  nlohmann::json config = nlohmann::json::object();  // budget+policy echo
  nlohmann::json extra = nlohmann::json::object();   // unknown fields, preserved
};

struct LoopPolicy {
  bool allow_code = true;
  bool allow_text_search = true;
  bool allow_image_search = true;
  int max_format_retries = 1;  // corrective messages before FormatFailure
  // Replay mode: tool errors (e.g. ReplayMiss) propagate instead of being
  // folded into ToolFailure observations.
  bool strict_tool_errors = false;
};

// Tool backends handed to the loop.  The sandbox session is opened lazily on
// the first code turn; search may be null when both search tools are off.
struct ToolBelt {
  sandbox::SandboxConfig sandbox_config;
  search::SearchClient* search = nullptr;
};

struct RunRequest {
  std::string id;
  std::string question;
  std::vector<std::string> input_images_png;
  model::GenerationBudget budget;
  LoopPolicy policy;
};

Trajectory run(const RunRequest& request, model::ModelClient& model, ToolBelt& tools);

// Recomputed from the final turn's parse, not echoed from the struct.
std::optional<std::string> extract_answer(const Trajectory& trajectory);

// -- persistence -------------------------------------------------------------

// One JSONL line per trajectory; images spill into the blob store.
std::string serialize(const Trajectory& trajectory, BlobStore& blobs);
// Throws Error(SchemaMismatch) with a byte offset for truncated lines.
Trajectory deserialize(std::string_view line, const BlobStore& blobs);

// Copy with wall-clock fields zeroed, so replay comparison sees only
// semantic content.
Trajectory normalized_for_compare(const Trajectory& trajectory);
bool equal_ignoring_timing(const Trajectory& a, const Trajectory& b);

// Canonical JSON forms.  to_json hashes image bytes inline; from_json needs
// a blob store to resolve them back to bytes.
nlohmann::json trajectory_to_json(const Trajectory& trajectory);
Trajectory trajectory_from_json(const nlohmann::json& j, const BlobStore* blobs);

// -- replay ------------------------------------------------------------------

struct Divergence {
  int turn_index = -1;
  std::string field;   // which part of the turn differed first
  std::string detail;
};

struct ReplayResult {
  Trajectory regenerated;
  std::optional<Divergence> divergence;  // empty on byte-identical replay
};

// First semantic difference between two trajectories, ignoring timing.
std::optional<Divergence> first_divergence(const Trajectory& a, const Trajectory& b);

// Re-runs a recorded trajectory with a scripted model built from its own
// turns plus replay-mode tools, then compares ignoring timing.
ReplayResult replay(const Trajectory& record, ToolBelt& tools);

}  // namespace agentloop::orchestrator
