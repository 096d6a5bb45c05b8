#include "agentloop/evalharness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "agentloop/errors.hpp"
#include "agentloop/util.hpp"

namespace agentloop::eval {

using nlohmann::json;

std::vector<BenchmarkItem> load_benchmark_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open benchmark file: " + path.string());
  std::vector<BenchmarkItem> items;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
      throw Error(ErrorCode::SchemaMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": malformed benchmark line");
    BenchmarkItem item;
    item.id = j.value("id", "");
    item.question = j.value("question", "");
    if (item.id.empty())
      throw Error(ErrorCode::SchemaMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": benchmark item needs id");
    // Relative image paths are anchored at the dataset file, not the cwd.
    for (const auto& p : j.value("images", json::array())) {
      std::filesystem::path img(p.get<std::string>());
      if (img.is_relative()) img = path.parent_path() / img;
      item.image_paths.push_back(std::move(img));
    }
    item.truth = reward::ground_truth_from_json(j.value("answer", json::object()));
    for (const auto& l : j.value("labels", json::array()))
      item.ability_labels.insert(l.get<std::string>());
    item.domain = j.value("domain", "");
    const json& policy = j.value("search_policy", json::object());
    item.search_policy.text_search = policy.value("text", true);
    item.search_policy.image_search = policy.value("image", true);
    items.push_back(std::move(item));
  }
  return items;
}

// -- aggregation -------------------------------------------------------------

namespace {

void bump(SubsetScore& s, bool correct) {
  ++s.items;
  if (correct) ++s.correct;
}

void finalize(SubsetScore& s) {
  s.accuracy = s.items > 0 ? static_cast<double>(s.correct) / s.items : 0.0;
}

std::string event_category(const orchestrator::ToolEvent& ev) {
  switch (ev.kind) {
    case orchestrator::ToolKind::ImageSearch: return "ImageSearch";
    case orchestrator::ToolKind::TextSearch: return "TextSearch";
    case orchestrator::ToolKind::CodeExec:
      return ev.code_class ? sandbox::code_class_name(*ev.code_class) : "Other";
  }
  return "Other";
}

}  // namespace

ToolStats compute_tool_stats(const std::vector<orchestrator::Trajectory>& trajectories) {
  ToolStats stats;
  std::vector<int> calls_per_traj;
  calls_per_traj.reserve(trajectories.size());
  int invoking = 0;
  for (const auto& traj : trajectories) {
    int calls = 0;
    for (const auto& turn : traj.turns) {
      for (const auto& ev : turn.events) {
        if (ev.refused) continue;  // attempted but not executed
        ++calls;
        stats.counts[event_category(ev)] += 1;
      }
    }
    calls_per_traj.push_back(calls);
    if (calls > 0) ++invoking;
    stats.total_calls += calls;
  }
  if (!trajectories.empty())
    stats.invocation_rate = static_cast<double>(invoking) / trajectories.size();
  if (stats.total_calls > 0)
    for (const auto& [cat, n] : stats.counts)
      stats.distribution[cat] = static_cast<double>(n) / stats.total_calls;
  if (!calls_per_traj.empty()) {
    double sum = 0;
    for (int c : calls_per_traj) sum += c;
    stats.calls_per_traj_mean = sum / calls_per_traj.size();
    double var = 0;
    for (int c : calls_per_traj) {
      double d = c - stats.calls_per_traj_mean;
      var += d * d;
    }
    // Population variance: these are all the trajectories there are, not a
    // sample from a larger run.
    stats.calls_per_traj_std = std::sqrt(var / calls_per_traj.size());
  }
  return stats;
}

EvalReport aggregate(const std::vector<BenchmarkItem>& items,
                     const std::vector<orchestrator::Trajectory>& trajectories,
                     const std::vector<reward::RewardBreakdown>& scores) {
  if (items.size() != trajectories.size() || items.size() != scores.size())
    throw Error(ErrorCode::Precondition, "aggregate inputs have mismatched lengths");

  EvalReport report;
  report.total_items = static_cast<int>(items.size());
  for (const char* name : {"perception", "reasoning", "search", "integration"})
    report.ability_subsets[name] = SubsetScore{};

  for (std::size_t i = 0; i < items.size(); ++i) {
    const BenchmarkItem& item = items[i];
    bool correct = scores[i].r_acc == 1.0;
    if (correct) ++report.correct_items;
    report.item_ids.push_back(item.id);

    for (const auto& label : item.ability_labels) {
      auto it = report.ability_subsets.find(label);
      if (it != report.ability_subsets.end()) bump(it->second, correct);
    }
    bool integration = item.ability_labels.count("perception") &&
                       item.ability_labels.count("reasoning") &&
                       item.ability_labels.count("search");
    if (integration) bump(report.ability_subsets["integration"], correct);
    if (!item.domain.empty()) bump(report.domains[item.domain], correct);
  }
  report.average_accuracy =
      report.total_items > 0 ? static_cast<double>(report.correct_items) / report.total_items
                             : 0.0;
  for (auto& [_, subset] : report.ability_subsets) finalize(subset);
  for (auto& [_, subset] : report.domains) finalize(subset);
  report.tool_stats = compute_tool_stats(trajectories);
  return report;
}

BenchmarkRunResult run_benchmark(const std::vector<BenchmarkItem>& items,
                                 model::ModelClient& model, orchestrator::ToolBelt& tools,
                                 const BenchmarkRunOptions& options) {
  BenchmarkRunResult result;
  result.trajectories.resize(items.size());
  result.scores.resize(items.size());

  parallel_for(items.size(), options.workers, [&](std::size_t i) {
    const BenchmarkItem& item = items[i];
    auto prior = options.resume.find(item.id);
    if (prior != options.resume.end()) {
      result.trajectories[i] = prior->second;
    } else {
      orchestrator::RunRequest req;
      req.id = item.id;
      req.question = item.question;
      for (const auto& p : item.image_paths) req.input_images_png.push_back(read_file(p));
      req.budget = options.budget;
      req.policy.allow_text_search =
          item.search_policy.text_search && options.allow_text_search;
      req.policy.allow_image_search =
          item.search_policy.image_search && options.allow_image_search;
      result.trajectories[i] = orchestrator::run(req, model, tools);
    }
    result.scores[i] =
        reward::score(result.trajectories[i], item.truth, options.reward_options);
  });

  result.report = aggregate(items, result.trajectories, result.scores);
  result.report.config_echo = {
      {"workers", options.workers},
      {"budget",
       {{"max_turns", options.budget.max_turns},
        {"max_response_tokens", options.budget.max_response_tokens},
        {"temperature", options.budget.temperature}}}};
  return result;
}

// -- comparison --------------------------------------------------------------

ReportDelta compare_reports(const EvalReport& a, const EvalReport& b) {
  if (a.item_ids != b.item_ids)
    throw Error(ErrorCode::Precondition, "reports cover different item sets");
  ReportDelta d;
  d.average_accuracy = b.average_accuracy - a.average_accuracy;
  for (const auto& [name, sa] : a.ability_subsets) {
    auto it = b.ability_subsets.find(name);
    if (it != b.ability_subsets.end())
      d.subset_deltas[name] = it->second.accuracy - sa.accuracy;
  }
  for (const auto& [name, sa] : a.domains) {
    auto it = b.domains.find(name);
    if (it != b.domains.end()) d.domain_deltas[name] = it->second.accuracy - sa.accuracy;
  }
  d.invocation_rate_delta = b.tool_stats.invocation_rate - a.tool_stats.invocation_rate;

  std::set<std::string> categories;
  for (const auto& [cat, _] : a.tool_stats.distribution) categories.insert(cat);
  for (const auto& [cat, _] : b.tool_stats.distribution) categories.insert(cat);
  for (const auto& cat : categories) {
    auto pa = a.tool_stats.distribution.count(cat) ? a.tool_stats.distribution.at(cat) : 0.0;
    auto pb = b.tool_stats.distribution.count(cat) ? b.tool_stats.distribution.at(cat) : 0.0;
    d.distribution_l1 += std::fabs(pb - pa);
  }
  return d;
}

// -- error annotation --------------------------------------------------------

ErrorTally annotate_errors(const std::vector<BenchmarkItem>& items,
                           const std::vector<reward::RewardBreakdown>& scores,
                           const std::vector<ErrorAnnotation>& annotations) {
  if (items.size() != scores.size())
    throw Error(ErrorCode::Precondition, "scores do not match items");
  std::map<std::string, bool> wrong_by_id;
  ErrorTally tally;
  for (std::size_t i = 0; i < items.size(); ++i) {
    bool wrong = scores[i].r_acc != 1.0;
    wrong_by_id[items[i].id] = wrong;
    if (wrong) ++tally.wrong_items;
  }

  std::set<std::string> valid_classes(std::begin(kErrorClasses), std::end(kErrorClasses));
  std::set<std::string> annotated;
  for (const auto& a : annotations) {
    auto it = wrong_by_id.find(a.item_id);
    if (it == wrong_by_id.end())
      throw Error(ErrorCode::Precondition, "annotation names unknown item " + a.item_id);
    if (!it->second)
      throw Error(ErrorCode::Precondition,
                  "annotation names correctly answered item " + a.item_id);
    if (!valid_classes.count(a.error_class))
      throw Error(ErrorCode::Precondition, "unknown error class " + a.error_class);
    tally.counts[a.error_class] += 1;
    annotated.insert(a.item_id);
  }
  int total_annotations = 0;
  for (const auto& [_, n] : tally.counts) total_annotations += n;
  if (total_annotations > 0)
    for (const auto& [cls, n] : tally.counts)
      tally.proportions[cls] = static_cast<double>(n) / total_annotations;
  tally.unannotated_wrong = tally.wrong_items - static_cast<int>(annotated.size());
  return tally;
}

// -- rendering ---------------------------------------------------------------

namespace {

std::string pct_one_decimal(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", fraction * 100.0);
  return buf;
}

}  // namespace

std::string render_accuracy_row(const EvalReport& report) {
  auto subset = [&](const char* name) {
    auto it = report.ability_subsets.find(name);
    return pct_one_decimal(it != report.ability_subsets.end() ? it->second.accuracy : 0.0);
  };
  return pct_one_decimal(report.average_accuracy) + "/" + subset("perception") + "/" +
         subset("reasoning") + "/" + subset("search") + "/" + subset("integration");
}

std::string render_report_text(const EvalReport& report) {
  std::ostringstream out;
  out << "items: " << report.total_items << "  correct: " << report.correct_items
      << "  accuracy: " << pct_one_decimal(report.average_accuracy) << "%\n";
  out << "subsets (avg/perception/reasoning/search/integration): "
      << render_accuracy_row(report) << "\n";
  for (const auto& [name, s] : report.domains)
    out << "domain " << name << ": " << s.correct << "/" << s.items << " ("
        << pct_one_decimal(s.accuracy) << "%)\n";
  const ToolStats& t = report.tool_stats;
  out << "tool invocation rate: " << t.invocation_rate << "  calls mean: " << t.calls_per_traj_mean
      << "  std: " << t.calls_per_traj_std << "\n";
  for (const auto& [cat, share] : t.distribution)
    out << "  " << cat << ": " << t.counts.at(cat) << " (" << share << ")\n";
  return out.str();
}

std::string render_tool_stats_csv(const ToolStats& stats) {
  std::ostringstream out;
  out << "category,count,share\n";
  for (const auto& [cat, n] : stats.counts) {
    double share = stats.distribution.count(cat) ? stats.distribution.at(cat) : 0.0;
    out << cat << "," << n << "," << share << "\n";
  }
  return out.str();
}

// -- (de)serialization -------------------------------------------------------

namespace {

json subset_to_json(const SubsetScore& s) {
  return {{"items", s.items}, {"correct", s.correct}, {"accuracy", s.accuracy}};
}

SubsetScore subset_from_json(const json& j) {
  SubsetScore s;
  s.items = j.value("items", 0);
  s.correct = j.value("correct", 0);
  s.accuracy = j.value("accuracy", 0.0);
  return s;
}

}  // namespace

json report_to_json(const EvalReport& report) {
  json j;
  j["total_items"] = report.total_items;
  j["correct_items"] = report.correct_items;
  j["average_accuracy"] = report.average_accuracy;
  json subsets = json::object();
  for (const auto& [name, s] : report.ability_subsets) subsets[name] = subset_to_json(s);
  j["ability_subsets"] = std::move(subsets);
  json domains = json::object();
  for (const auto& [name, s] : report.domains) domains[name] = subset_to_json(s);
  j["domains"] = std::move(domains);
  j["tool_stats"] = {{"invocation_rate", report.tool_stats.invocation_rate},
                     {"counts", report.tool_stats.counts},
                     {"distribution", report.tool_stats.distribution},
                     {"calls_per_traj_mean", report.tool_stats.calls_per_traj_mean},
                     {"calls_per_traj_std", report.tool_stats.calls_per_traj_std},
                     {"total_calls", report.tool_stats.total_calls}};
  j["item_ids"] = report.item_ids;
  j["config_echo"] = report.config_echo;
  return j;
}

EvalReport report_from_json(const json& j) {
  EvalReport report;
  report.total_items = j.value("total_items", 0);
  report.correct_items = j.value("correct_items", 0);
  report.average_accuracy = j.value("average_accuracy", 0.0);
  // .items() keeps a reference into its json, so the objects returned by
  // value() must outlive the loops: name them instead of chaining.
  const json subsets = j.value("ability_subsets", json::object());
  for (const auto& [name, s] : subsets.items()) report.ability_subsets[name] = subset_from_json(s);
  const json domains = j.value("domains", json::object());
  for (const auto& [name, s] : domains.items()) report.domains[name] = subset_from_json(s);
  const json t = j.value("tool_stats", json::object());
  report.tool_stats.invocation_rate = t.value("invocation_rate", 0.0);
  const json counts = t.value("counts", json::object());
  for (const auto& [cat, n] : counts.items()) report.tool_stats.counts[cat] = n.get<int>();
  const json distribution = t.value("distribution", json::object());
  for (const auto& [cat, p] : distribution.items())
    report.tool_stats.distribution[cat] = p.get<double>();
  report.tool_stats.calls_per_traj_mean = t.value("calls_per_traj_mean", 0.0);
  report.tool_stats.calls_per_traj_std = t.value("calls_per_traj_std", 0.0);
  report.tool_stats.total_calls = t.value("total_calls", 0);
  for (const auto& id : j.value("item_ids", json::array()))
    report.item_ids.push_back(id.get<std::string>());
  report.config_echo = j.value("config_echo", json::object());
  return report;
}

}  // namespace agentloop::eval
