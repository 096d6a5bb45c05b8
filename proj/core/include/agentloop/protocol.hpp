#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace agentloop::protocol {

// One model turn must read <think>..</think> followed by exactly one of:
// a run of <code> blocks, a run of <tool_call> blocks, or one <answer>.
enum class SegmentKind { Think, Code, ToolCall, Answer };

enum class Violation {
  UnclosedTag,        // opening tag without its closing tag
  NestedTag,          // a recognized opening tag inside another segment body
  StrayText,          // non-whitespace outside tags, or segments the grammar rejects
  MultipleToolKinds,  // <code> and <tool_call> mixed in one turn
  MissingThink,       // turn does not start with <think>
  EmptyAnswer,        // <answer> body blank, or no terminal segment at all
  MalformedToolJson,  // <tool_call> body is not a valid tool request
};

const char* segment_kind_name(SegmentKind kind);
const char* violation_name(Violation v);

struct Segment {
  SegmentKind kind = SegmentKind::Think;
  std::string body;            // text strictly between the tags
  std::size_t span_begin = 0;  // byte range covered in the raw turn; spans
  std::size_t span_end = 0;    // tile the whole turn when it is well formed
};

struct TurnParse {
  std::vector<Segment> segments;
  std::vector<Violation> violations;  // deduplicated, in enum declaration order
  bool format_valid = false;          // <=> violations.empty()

  bool has_violation(Violation v) const;
  const Segment* first_of(SegmentKind kind) const;
  int count_of(SegmentKind kind) const;
};

// Total function: never throws, all defects are reported as violations.
TurnParse parse_turn(std::string_view raw_turn);

// A <tool_call> body.  `query` is present exactly for text search.
struct ToolCallRequest {
  std::string name;                   // "image_search" | "search"
  std::optional<std::string> query;
};

// nullopt covers every malformed case: invalid JSON, unknown name, text
// search without a non-empty string query.
std::optional<ToolCallRequest> parse_tool_call(std::string_view body);

// -- observation rendering ---------------------------------------------------
// Tool outputs are rendered into fixed user-message templates.  The byte
// layout is part of the model interface: goldens in tests pin it.

enum class ObservationKind { CodeResult, ImageSearchResult, TextSearchResult };

struct CodeResultPayload {
  std::string stdout_text;
  std::string stderr_text;
  std::vector<std::string> images;  // raw PNG bytes, display order
};

struct SearchResultEntry {
  std::string title;
  std::string link;
  std::string snippet;
  std::string thumbnail_png;  // raw bytes; image search only
};

struct RenderedObservation {
  ObservationKind kind = ObservationKind::CodeResult;
  std::string text;                 // with "<image>" placeholders inline
  std::vector<std::string> images;  // one payload per placeholder, in order
};

RenderedObservation render_code_result(const CodeResultPayload& payload);
RenderedObservation render_image_search_result(const std::vector<SearchResultEntry>& entries);
RenderedObservation render_text_search_result(std::string_view query,
                                              const std::vector<SearchResultEntry>& entries);

// Trimmed <answer> body of a fully valid turn; nullopt otherwise.
std::optional<std::string> extract_answer(const TurnParse& parse);

}  // namespace agentloop::protocol
