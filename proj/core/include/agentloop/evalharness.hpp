#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "agentloop/orchestrator.hpp"
#include "agentloop/reward.hpp"

namespace agentloop::eval {

// Which search tools a benchmark permits (offline benchmarks switch both off).
struct SearchToolPolicy {
  bool text_search = true;
  bool image_search = true;
};

struct BenchmarkItem {
  std::string id;
  std::string question;
  std::vector<std::filesystem::path> image_paths;
  reward::GroundTruth truth;
  // Subset of {"perception", "reasoning", "search"}; an item with all three
  // also counts toward the integration subset.
  std::set<std::string> ability_labels;
  std::string domain;
  SearchToolPolicy search_policy;
};

std::vector<BenchmarkItem> load_benchmark_jsonl(const std::filesystem::path& path);

struct SubsetScore {
  int items = 0;
  int correct = 0;
  double accuracy = 0.0;  // 0 when items == 0
};

// Tool-call behavior over a result set.  Distribution keys are code class
// names plus ImageSearch/TextSearch; refused attempts never count.
struct ToolStats {
  double invocation_rate = 0.0;           // share of trajectories using any tool
  std::map<std::string, int> counts;      // per category
  std::map<std::string, double> distribution;  // counts normalized, sums to 1
  double calls_per_traj_mean = 0.0;
  double calls_per_traj_std = 0.0;        // population std
  int total_calls = 0;
};

struct EvalReport {
  int total_items = 0;
  int correct_items = 0;
  double average_accuracy = 0.0;
  std::map<std::string, SubsetScore> ability_subsets;  // + "integration"
  std::map<std::string, SubsetScore> domains;
  ToolStats tool_stats;
  std::vector<std::string> item_ids;  // evaluation order
  nlohmann::json config_echo = nlohmann::json::object();
};

EvalReport aggregate(const std::vector<BenchmarkItem>& items,
                     const std::vector<orchestrator::Trajectory>& trajectories,
                     const std::vector<reward::RewardBreakdown>& scores);

ToolStats compute_tool_stats(const std::vector<orchestrator::Trajectory>& trajectories);

struct BenchmarkRunOptions {
  model::GenerationBudget budget;
  int workers = 4;
  reward::RewardOptions reward_options;
  // Benchmark-wide ablation switches, ANDed with each item's search_policy.
  bool allow_text_search = true;
  bool allow_image_search = true;
  // Already-completed trajectories by item id; matching items are rescored
  // from the stored record instead of re-running the model.
  std::map<std::string, orchestrator::Trajectory> resume;
};

struct BenchmarkRunResult {
  std::vector<orchestrator::Trajectory> trajectories;  // item order
  std::vector<reward::RewardBreakdown> scores;
  EvalReport report;
};

BenchmarkRunResult run_benchmark(const std::vector<BenchmarkItem>& items,
                                 model::ModelClient& model, orchestrator::ToolBelt& tools,
                                 const BenchmarkRunOptions& options);

// -- report comparison -------------------------------------------------------

struct ReportDelta {
  double average_accuracy = 0.0;  // b - a
  std::map<std::string, double> subset_deltas;
  std::map<std::string, double> domain_deltas;
  double invocation_rate_delta = 0.0;
  // L1 distance between tool distributions over the union of categories.
  double distribution_l1 = 0.0;
};

// Throws Error(Precondition) when the two reports cover different items.
ReportDelta compare_reports(const EvalReport& a, const EvalReport& b);

// -- error annotation --------------------------------------------------------

inline constexpr const char* kErrorClasses[] = {
    "tool_execution", "tool_selection", "result_analysis"};

struct ErrorAnnotation {
  std::string item_id;
  std::string error_class;  // one of kErrorClasses
  std::string note;
};

struct ErrorTally {
  std::map<std::string, int> counts;
  std::map<std::string, double> proportions;  // over annotated wrong items
  int wrong_items = 0;
  int unannotated_wrong = 0;
};

// Tallies annotations over incorrect items.  Throws Error(Precondition) for
// annotations naming correct or unknown items, or unknown classes.
ErrorTally annotate_errors(const std::vector<BenchmarkItem>& items,
                           const std::vector<reward::RewardBreakdown>& scores,
                           const std::vector<ErrorAnnotation>& annotations);

// -- rendering ---------------------------------------------------------------

// One-decimal percentage table row: overall + the four subsets.
std::string render_accuracy_row(const EvalReport& report);
std::string render_report_text(const EvalReport& report);
std::string render_tool_stats_csv(const ToolStats& stats);

nlohmann::json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);

}  // namespace agentloop::eval
