#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "agentloop/orchestrator.hpp"
#include "agentloop/reward.hpp"

namespace agentloop::curation {

struct CurationConfig {
  int k = 8;                     // rollouts per item and phase
  int max_correct_for_hard = 2;  // keep iff no-tool passes <= this
  int rl_min_tool_pass = 1;      // RL set iff tool passes >= this
  std::uint64_t seed = 0;
  int workers = 4;
  model::GenerationBudget budget;

  void validate() const;  // throws Error(ConfigError)
};

struct CurationItem {
  std::string id;
  std::string question;
  std::vector<std::filesystem::path> image_paths;
  reward::GroundTruth truth;
  std::string source_tag;  // provenance label carried into exports
  bool long_cot = false;   // ingestion-only: bypasses filters, cold start
};

std::vector<CurationItem> load_items_jsonl(const std::filesystem::path& path);

// Append-only rollout checkpoint: finished (item, phase) pass counts survive
// interrupts, so a rerun skips completed work.  Safe for concurrent record()
// calls from worker threads.
class CheckpointLog {
 public:
  explicit CheckpointLog(std::filesystem::path path);  // loads existing entries
  std::optional<int> lookup(const std::string& item_id, const std::string& phase) const;
  void record(const std::string& item_id, const std::string& phase, int pass_count);

 private:
  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::map<std::string, int> entries_;  // "item\x1fphase" -> pass count
};

enum class Route { DiscardTrivial, RLSet, ColdStartSet };

const char* route_name(Route r);

// Pure routing rule over the two pass counts.
Route route_for(int no_tool_pass_count, int tool_pass_count, const CurationConfig& config);

struct ItemVerdict {
  std::string item_id;
  int no_tool_pass_count = 0;
  int tool_pass_count = -1;  // -1 when the tool phase was skipped
  Route route = Route::DiscardTrivial;
  bool long_cot = false;
};

struct DifficultyOutcome {
  std::string item_id;
  int pass_count = 0;
  bool keep = false;  // pass_count <= max_correct_for_hard
};

// Phase 1: k no-tool single-turn rollouts per item; items the base model
// already solves more than max_correct_for_hard times are dropped.
std::vector<DifficultyOutcome> difficulty_filter(const std::vector<CurationItem>& items,
                                                 model::ModelClient& model,
                                                 const CurationConfig& config,
                                                 CheckpointLog* checkpoint = nullptr);

// Phase 2: k tool-enabled rollouts per surviving item; the tool pass count
// splits RL set from cold start.
std::vector<ItemVerdict> tool_benefit_classify(const std::vector<CurationItem>& items,
                                               const std::vector<DifficultyOutcome>& difficulty,
                                               model::ModelClient& model,
                                               orchestrator::ToolBelt& tools,
                                               const CurationConfig& config,
                                               CheckpointLog* checkpoint = nullptr);

// Cold-start synthesis keeps a trajectory only when it is flawless: correct
// answer, every turn valid, every code cell Ok with empty stderr.
bool retain_for_synthesis(const orchestrator::Trajectory& trajectory,
                          const reward::GroundTruth& truth);

struct PipelineResult {
  std::vector<ItemVerdict> verdicts;
  nlohmann::json manifest;
  std::filesystem::path rl_set_path;
  std::filesystem::path cold_start_path;
  std::filesystem::path manifest_path;
};

// Full pipeline: difficulty filter -> tool benefit -> export.  `make_model`
// builds a fresh mock per phase so rollout counters start clean.  Outputs
// are byte-identical across reruns with the same inputs and seed.
PipelineResult run_pipeline(
    const std::vector<CurationItem>& items,
    const std::function<std::unique_ptr<model::ModelClient>(model::RolloutScriptModel::Phase)>&
        make_model,
    orchestrator::ToolBelt& tools, const CurationConfig& config,
    const std::filesystem::path& out_dir);

// Writes rl_set.jsonl / cold_start_set.jsonl and returns the manifest.
// Throws Error(Precondition) if any item would land in both sets.
nlohmann::json export_dataset(const std::vector<CurationItem>& items,
                              const std::vector<ItemVerdict>& verdicts,
                              const CurationConfig& config,
                              const std::filesystem::path& out_dir);

}  // namespace agentloop::curation
