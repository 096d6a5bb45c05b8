#include "agentloop/protocol.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

#include "agentloop/util.hpp"

namespace agentloop::protocol {

namespace {

struct TagSpec {
  SegmentKind kind;
  std::string_view open;
  std::string_view close;
};

constexpr TagSpec kTags[] = {
    {SegmentKind::Think, "<think>", "</think>"},
    {SegmentKind::Code, "<code>", "</code>"},
    {SegmentKind::ToolCall, "<tool_call>", "</tool_call>"},
    {SegmentKind::Answer, "<answer>", "</answer>"},
};

bool all_whitespace(std::string_view s) {
  return std::all_of(s.begin(), s.end(),
                     [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; });
}

struct OpenerHit {
  std::size_t pos;
  int tag;
};

// First opening tag in raw[from, to).  Hops between '<' characters, so the
// scan stays linear in the input for the fixed tag set.
std::optional<OpenerHit> find_opener(std::string_view raw, std::size_t from, std::size_t to) {
  std::size_t i = from;
  while (i < to) {
    std::size_t lt = raw.find('<', i);
    if (lt == std::string_view::npos || lt >= to) return std::nullopt;
    for (int t = 0; t < 4; ++t) {
      const auto& open = kTags[t].open;
      if (lt + open.size() <= to && raw.compare(lt, open.size(), open) == 0)
        return OpenerHit{lt, t};
    }
    i = lt + 1;
  }
  return std::nullopt;
}

}  // namespace

const char* segment_kind_name(SegmentKind kind) {
  switch (kind) {
    case SegmentKind::Think: return "think";
    case SegmentKind::Code: return "code";
    case SegmentKind::ToolCall: return "tool_call";
    case SegmentKind::Answer: return "answer";
  }
  return "?";
}

const char* violation_name(Violation v) {
  switch (v) {
    case Violation::UnclosedTag: return "UnclosedTag";
    case Violation::NestedTag: return "NestedTag";
    case Violation::StrayText: return "StrayText";
    case Violation::MultipleToolKinds: return "MultipleToolKinds";
    case Violation::MissingThink: return "MissingThink";
    case Violation::EmptyAnswer: return "EmptyAnswer";
    case Violation::MalformedToolJson: return "MalformedToolJson";
  }
  return "?";
}

bool TurnParse::has_violation(Violation v) const {
  return std::find(violations.begin(), violations.end(), v) != violations.end();
}

const Segment* TurnParse::first_of(SegmentKind kind) const {
  for (const auto& s : segments)
    if (s.kind == kind) return &s;
  return nullptr;
}

int TurnParse::count_of(SegmentKind kind) const {
  return static_cast<int>(
      std::count_if(segments.begin(), segments.end(),
                    [kind](const Segment& s) { return s.kind == kind; }));
}

TurnParse parse_turn(std::string_view raw) {
  TurnParse out;
  std::set<Violation> vios;  // set keeps enum order and deduplicates

  // -- segmentation ---------------------------------------------------------
  std::size_t pos = 0;
  bool unclosed_tail = false;
  while (pos < raw.size()) {
    auto hit = find_opener(raw, pos, raw.size());
    if (!hit) break;
    const TagSpec& tag = kTags[hit->tag];
    bool gap_clean = all_whitespace(raw.substr(pos, hit->pos - pos));
    if (!gap_clean) vios.insert(Violation::StrayText);

    Segment seg;
    seg.kind = tag.kind;
    // Spans tile the turn: each segment absorbs the (whitespace) gap before
    // it, and the last one the trailing whitespace, so concatenating
    // raw[span_begin, span_end) round-trips a well-formed turn exactly.
    seg.span_begin = gap_clean ? pos : hit->pos;

    std::size_t body_start = hit->pos + tag.open.size();
    std::size_t close_pos = raw.find(tag.close, body_start);
    if (close_pos == std::string_view::npos) {
      vios.insert(Violation::UnclosedTag);
      seg.body = std::string(raw.substr(body_start));
      seg.span_end = raw.size();
      out.segments.push_back(std::move(seg));
      unclosed_tail = true;
      pos = raw.size();
      break;
    }
    if (find_opener(raw, body_start, close_pos)) vios.insert(Violation::NestedTag);
    seg.body = std::string(raw.substr(body_start, close_pos - body_start));
    seg.span_end = close_pos + tag.close.size();
    pos = seg.span_end;
    out.segments.push_back(std::move(seg));
  }
  if (!unclosed_tail) {
    if (!all_whitespace(raw.substr(pos)))
      vios.insert(Violation::StrayText);
    else if (!out.segments.empty())
      out.segments.back().span_end = raw.size();
  }

  // -- grammar: Think then exactly one homogeneous terminal group -----------
  const auto& segs = out.segments;
  const std::size_t n = segs.size();
  std::size_t i = 0;
  if (n == 0 || segs[0].kind != SegmentKind::Think)
    vios.insert(Violation::MissingThink);
  else
    i = 1;
  while (i < n && segs[i].kind == SegmentKind::Think) {
    vios.insert(Violation::StrayText);  // repeated think blocks
    ++i;
  }
  if (i == n) {
    // No terminal segment at all: the turn neither answers nor acts, which
    // the reward model treats the same as an empty answer.
    vios.insert(Violation::EmptyAnswer);
  } else {
    SegmentKind terminal = segs[i].kind;
    std::size_t j = i;
    while (j < n && segs[j].kind == terminal) ++j;
    if (terminal == SegmentKind::Answer && j - i > 1)
      vios.insert(Violation::StrayText);  // more than one answer
    for (; j < n; ++j) {
      SegmentKind s = segs[j].kind;
      bool both_tools = (terminal == SegmentKind::Code || terminal == SegmentKind::ToolCall) &&
                        (s == SegmentKind::Code || s == SegmentKind::ToolCall);
      vios.insert(both_tools ? Violation::MultipleToolKinds : Violation::StrayText);
    }
  }

  // -- per-segment content checks -------------------------------------------
  for (const auto& seg : segs) {
    if (seg.kind == SegmentKind::Answer && trim_view(seg.body).empty())
      vios.insert(Violation::EmptyAnswer);
    if (seg.kind == SegmentKind::ToolCall && !parse_tool_call(seg.body))
      vios.insert(Violation::MalformedToolJson);
  }

  out.violations.assign(vios.begin(), vios.end());
  out.format_valid = out.violations.empty();
  return out;
}

std::optional<ToolCallRequest> parse_tool_call(std::string_view body) {
  nlohmann::json j = nlohmann::json::parse(body, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  auto name_it = j.find("name");
  if (name_it == j.end() || !name_it->is_string()) return std::nullopt;
  std::string name = name_it->get<std::string>();
  if (name == "image_search") return ToolCallRequest{name, std::nullopt};
  if (name == "search") {
    auto args_it = j.find("arguments");
    if (args_it == j.end() || !args_it->is_object()) return std::nullopt;
    auto q_it = args_it->find("query");
    if (q_it == args_it->end() || !q_it->is_string()) return std::nullopt;
    std::string query = q_it->get<std::string>();
    if (trim_view(query).empty()) return std::nullopt;
    return ToolCallRequest{name, std::move(query)};
  }
  return std::nullopt;
}

// -- observation templates ---------------------------------------------------
// Byte layout matches the deployed templates exactly; golden files under
// tests/golden pin every branch.

namespace {

// A fenced block: empty content renders as ``` immediately followed by ```;
// non-empty content always ends with a newline before the closing fence.
std::string fenced(const std::string& content) {
  std::string out = "```\n";
  if (!content.empty()) {
    out += content;
    if (content.back() != '\n') out += '\n';
  }
  out += "```\n";
  return out;
}

}  // namespace

RenderedObservation render_code_result(const CodeResultPayload& payload) {
  RenderedObservation obs;
  obs.kind = ObservationKind::CodeResult;
  obs.text = "Code execution result:\n\nstdout:\n" + fenced(payload.stdout_text) +
             "\nstderr:\n" + fenced(payload.stderr_text);
  if (!payload.images.empty()) {
    obs.text += "\nImage:\n";
    for (std::size_t i = 0; i < payload.images.size(); ++i) obs.text += "<image>\n";
    obs.images = payload.images;
  }
  return obs;
}

namespace {

// Search header always claims 5 results; the count is part of the fixed
// template, not a function of how many entries the provider returned.
std::string search_body(std::string header, const std::vector<std::string>& lines) {
  header += "\n\n## Web Results\n\n";
  if (lines.empty()) {
    header += "No results found.\n";
    return header;
  }
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i > 0) header += "\n";
    header += std::to_string(i + 1) + ". " + lines[i] + "\n";
  }
  return header;
}

}  // namespace

RenderedObservation render_image_search_result(const std::vector<SearchResultEntry>& entries) {
  RenderedObservation obs;
  obs.kind = ObservationKind::ImageSearchResult;
  std::vector<std::string> lines;
  lines.reserve(entries.size());
  for (const auto& e : entries) {
    lines.push_back("<image> [" + e.title + "]");
    obs.images.push_back(e.thumbnail_png);
  }
  obs.text = search_body("A Google image search for the image found 5 results:", lines);
  return obs;
}

RenderedObservation render_text_search_result(std::string_view query,
                                              const std::vector<SearchResultEntry>& entries) {
  RenderedObservation obs;
  obs.kind = ObservationKind::TextSearchResult;
  std::vector<std::string> lines;
  lines.reserve(entries.size());
  for (const auto& e : entries)
    lines.push_back("[" + e.title + "] (" + e.link + ") " + e.snippet);
  obs.text = search_body("A Google search for '" + std::string(query) + "' found 5 results:",
                         lines);
  return obs;
}

std::optional<std::string> extract_answer(const TurnParse& parse) {
  if (!parse.format_valid) return std::nullopt;
  const Segment* answer = parse.first_of(SegmentKind::Answer);
  if (!answer) return std::nullopt;
  return trim(answer->body);
}

}  // namespace agentloop::protocol
