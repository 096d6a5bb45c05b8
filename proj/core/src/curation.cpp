#include "agentloop/curation.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "agentloop/blob_store.hpp"
#include "agentloop/errors.hpp"
#include "agentloop/prompts.hpp"
#include "agentloop/util.hpp"

namespace agentloop::curation {

using nlohmann::json;

void CurationConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::ConfigError, "curation k must be >= 1");
  if (max_correct_for_hard < 0 || max_correct_for_hard >= k)
    throw Error(ErrorCode::ConfigError,
                "max_correct_for_hard must lie in [0, k): got " +
                    std::to_string(max_correct_for_hard) + " with k=" + std::to_string(k));
  if (rl_min_tool_pass < 1 || rl_min_tool_pass > k)
    throw Error(ErrorCode::ConfigError, "rl_min_tool_pass must lie in [1, k]");
  if (workers < 1) throw Error(ErrorCode::ConfigError, "workers must be >= 1");
}

const char* route_name(Route r) {
  switch (r) {
    case Route::DiscardTrivial: return "discard_trivial";
    case Route::RLSet: return "rl_set";
    case Route::ColdStartSet: return "cold_start_set";
  }
  return "?";
}

std::vector<CurationItem> load_items_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open items file: " + path.string());
  std::vector<CurationItem> items;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim_view(line).empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
      throw Error(ErrorCode::SchemaMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": malformed item line");
    CurationItem item;
    item.id = j.value("id", "");
    item.question = j.value("question", "");
    if (item.id.empty() || item.question.empty())
      throw Error(ErrorCode::SchemaMismatch,
                  path.string() + ":" + std::to_string(line_no) + ": item needs id and question");
    // Relative image paths are anchored at the dataset file, not the cwd.
    for (const auto& p : j.value("images", json::array())) {
      std::filesystem::path img(p.get<std::string>());
      if (img.is_relative()) img = path.parent_path() / img;
      item.image_paths.push_back(std::move(img));
    }
    item.truth = reward::ground_truth_from_json(j.value("answer", json::object()));
    item.source_tag = j.value("source", "");
    item.long_cot = j.value("long_cot", false);
    items.push_back(std::move(item));
  }
  return items;
}

// -- checkpoint --------------------------------------------------------------

namespace {
std::string ck_key(const std::string& item_id, const std::string& phase) {
  return item_id + '\x1f' + phase;
}
}  // namespace

CheckpointLog::CheckpointLog(std::filesystem::path path) : path_(std::move(path)) {
  if (!std::filesystem::exists(path_)) return;
  std::ifstream in(path_);
  std::string line;
  while (std::getline(in, line)) {
    if (trim_view(line).empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) continue;  // torn tail from an interrupt is expected
    entries_[ck_key(j.value("item_id", ""), j.value("phase", ""))] = j.value("pass_count", 0);
  }
}

std::optional<int> CheckpointLog::lookup(const std::string& item_id,
                                         const std::string& phase) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto it = entries_.find(ck_key(item_id, phase));
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CheckpointLog::record(const std::string& item_id, const std::string& phase,
                           int pass_count) {
  std::lock_guard<std::mutex> lock(mutex_);
  entries_[ck_key(item_id, phase)] = pass_count;
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  std::ofstream out(path_, std::ios::app);
  json j = {{"item_id", item_id}, {"phase", phase}, {"pass_count", pass_count}};
  out << j.dump() << "\n";
}

// -- routing -----------------------------------------------------------------

Route route_for(int no_tool_pass_count, int tool_pass_count, const CurationConfig& config) {
  if (no_tool_pass_count > config.max_correct_for_hard) return Route::DiscardTrivial;
  if (tool_pass_count >= config.rl_min_tool_pass) return Route::RLSet;
  return Route::ColdStartSet;
}

// -- phase 1: difficulty -----------------------------------------------------

namespace {

// One single-turn rollout without tools: plain prompts, parse, judge.
orchestrator::Trajectory no_tool_rollout(const CurationItem& item, model::ModelClient& model,
                                         const model::GenerationBudget& budget,
                                         const std::string& rollout_id) {
  std::vector<model::ChatMessage> history;
  history.push_back(model::ChatMessage::text(model::Role::System,
                                             std::string(prompts::no_tool_system_prompt())));
  history.push_back(model::ChatMessage::text(
      model::Role::User, prompts::render_no_tool_user_prompt(item.question)));
  model::ModelTurn mt = model.generate_turn(history, budget, {});

  orchestrator::Trajectory traj;
  traj.id = rollout_id;
  traj.question = item.question;
  orchestrator::TurnRecord rec;
  rec.text = mt.text;
  rec.token_count = mt.token_count;
  rec.parse = protocol::parse_turn(mt.text);
  traj.turns.push_back(std::move(rec));
  if (auto answer = protocol::extract_answer(traj.turns.back().parse)) {
    traj.final_answer = *answer;
    traj.termination = orchestrator::Termination::Answered;
  } else {
    traj.termination = traj.turns.back().parse.format_valid
                           ? orchestrator::Termination::TurnBudget
                           : orchestrator::Termination::FormatFailure;
  }
  return traj;
}

std::vector<std::string> load_item_images(const CurationItem& item) {
  std::vector<std::string> images;
  images.reserve(item.image_paths.size());
  for (const auto& p : item.image_paths) images.push_back(read_file(p));
  return images;
}

}  // namespace

std::vector<DifficultyOutcome> difficulty_filter(const std::vector<CurationItem>& items,
                                                 model::ModelClient& model,
                                                 const CurationConfig& config,
                                                 CheckpointLog* checkpoint) {
  config.validate();
  std::vector<DifficultyOutcome> outcomes(items.size());
  parallel_for(items.size(), config.workers, [&](std::size_t i) {
    const CurationItem& item = items[i];
    int passes;
    if (auto cached = checkpoint ? checkpoint->lookup(item.id, "no_tool") : std::nullopt) {
      passes = *cached;
    } else {
      passes = 0;
      // Rollouts of one item stay sequential so per-rollout behavior is
      // reproducible regardless of worker scheduling.
      model::GenerationBudget budget = config.budget;
      for (int k = 0; k < config.k; ++k) {
        budget.seed = mix_seed(config.seed, item.id + "/no_tool/" + std::to_string(k));
        auto traj =
            no_tool_rollout(item, model, budget, item.id + "-notool-" + std::to_string(k));
        if (reward::accuracy_reward(traj, item.truth) == 1.0) ++passes;
      }
      if (checkpoint) checkpoint->record(item.id, "no_tool", passes);
    }
    outcomes[i] = {item.id, passes, passes <= config.max_correct_for_hard};
  });
  return outcomes;
}

// -- phase 2: tool benefit ---------------------------------------------------

std::vector<ItemVerdict> tool_benefit_classify(const std::vector<CurationItem>& items,
                                               const std::vector<DifficultyOutcome>& difficulty,
                                               model::ModelClient& model,
                                               orchestrator::ToolBelt& tools,
                                               const CurationConfig& config,
                                               CheckpointLog* checkpoint) {
  config.validate();
  if (items.size() != difficulty.size())
    throw Error(ErrorCode::Precondition, "difficulty outcomes do not match items");

  std::vector<ItemVerdict> verdicts(items.size());
  parallel_for(items.size(), config.workers, [&](std::size_t i) {
    const CurationItem& item = items[i];
    ItemVerdict v;
    v.item_id = item.id;
    v.no_tool_pass_count = difficulty[i].pass_count;
    v.long_cot = item.long_cot;
    if (!difficulty[i].keep) {
      v.tool_pass_count = -1;
      v.route = Route::DiscardTrivial;
      verdicts[i] = std::move(v);
      return;
    }
    int passes;
    if (auto cached = checkpoint ? checkpoint->lookup(item.id, "tool") : std::nullopt) {
      passes = *cached;
    } else {
      passes = 0;
      std::vector<std::string> images = load_item_images(item);
      for (int k = 0; k < config.k; ++k) {
        orchestrator::RunRequest req;
        req.id = item.id + "-tool-" + std::to_string(k);
        req.question = item.question;
        req.input_images_png = images;
        req.budget = config.budget;
        req.budget.seed = mix_seed(config.seed, item.id + "/tool/" + std::to_string(k));
        auto traj = orchestrator::run(req, model, tools);
        if (reward::accuracy_reward(traj, item.truth) == 1.0) ++passes;
      }
      if (checkpoint) checkpoint->record(item.id, "tool", passes);
    }
    v.tool_pass_count = passes;
    v.route = route_for(v.no_tool_pass_count, passes, config);
    verdicts[i] = std::move(v);
  });
  return verdicts;
}

// -- synthesis retention -----------------------------------------------------

bool retain_for_synthesis(const orchestrator::Trajectory& trajectory,
                          const reward::GroundTruth& truth) {
  if (reward::accuracy_reward(trajectory, truth) != 1.0) return false;
  for (const auto& turn : trajectory.turns) {
    if (!turn.parse.format_valid) return false;
    for (const auto& ev : turn.events) {
      if (ev.kind != orchestrator::ToolKind::CodeExec) continue;
      if (ev.refused) return false;
      if (!ev.result.is_object()) return false;
      if (ev.result.value("status", "") != "Ok") return false;
      if (!ev.result.value("stderr", "").empty()) return false;
    }
  }
  return true;
}

// -- export ------------------------------------------------------------------

namespace {

json item_record(const CurationItem& item, const ItemVerdict& v) {
  json j;
  j["id"] = item.id;
  j["question"] = item.question;
  json images = json::array();
  for (const auto& p : item.image_paths) images.push_back(p.string());
  j["images"] = std::move(images);
  j["answer"] = reward::ground_truth_to_json(item.truth);
  j["source"] = item.source_tag;
  j["long_cot"] = item.long_cot;
  j["no_tool_pass_count"] = v.no_tool_pass_count;
  j["tool_pass_count"] = v.tool_pass_count;
  return j;
}

json config_echo(const CurationConfig& config) {
  return {{"k", config.k},
          {"max_correct_for_hard", config.max_correct_for_hard},
          {"rl_min_tool_pass", config.rl_min_tool_pass},
          {"seed", config.seed},
          {"workers", config.workers}};
}

}  // namespace

json export_dataset(const std::vector<CurationItem>& items,
                    const std::vector<ItemVerdict>& verdicts, const CurationConfig& config,
                    const std::filesystem::path& out_dir) {
  if (items.size() != verdicts.size())
    throw Error(ErrorCode::Precondition, "verdicts do not match items");
  std::filesystem::create_directories(out_dir);

  std::ostringstream rl, cold;
  int n_discard = 0, n_rl = 0, n_cold = 0;
  std::set<std::string> rl_ids, cold_ids;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& v = verdicts[i];
    switch (v.route) {
      case Route::DiscardTrivial:
        ++n_discard;
        break;
      case Route::RLSet:
        rl << item_record(items[i], v).dump() << "\n";
        rl_ids.insert(items[i].id);
        ++n_rl;
        break;
      case Route::ColdStartSet:
        cold << item_record(items[i], v).dump() << "\n";
        cold_ids.insert(items[i].id);
        ++n_cold;
        break;
    }
  }
  for (const auto& id : rl_ids)
    if (cold_ids.count(id))
      throw Error(ErrorCode::Precondition, "item routed to both sets: " + id);

  std::string rl_bytes = rl.str();
  std::string cold_bytes = cold.str();
  atomic_write_file(out_dir / "rl_set.jsonl", rl_bytes);
  atomic_write_file(out_dir / "cold_start_set.jsonl", cold_bytes);

  json manifest;
  manifest["config"] = config_echo(config);
  manifest["counts"] = {{"input", items.size()},
                        {"discarded", n_discard},
                        {"rl_set", n_rl},
                        {"cold_start_set", n_cold}};
  manifest["files"] = {
      {"rl_set", {{"name", "rl_set.jsonl"}, {"sha256", sha256_hex(rl_bytes)}, {"lines", n_rl}}},
      {"cold_start_set",
       {{"name", "cold_start_set.jsonl"},
        {"sha256", sha256_hex(cold_bytes)},
        {"lines", n_cold}}}};
  atomic_write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  return manifest;
}

PipelineResult run_pipeline(
    const std::vector<CurationItem>& items,
    const std::function<std::unique_ptr<model::ModelClient>(model::RolloutScriptModel::Phase)>&
        make_model,
    orchestrator::ToolBelt& tools, const CurationConfig& config,
    const std::filesystem::path& out_dir) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  CheckpointLog checkpoint(out_dir / "checkpoint.jsonl");

  // Long-chain-of-thought items skip both rollout phases: they exist to be
  // distilled, so they go straight to the cold-start set.
  std::vector<CurationItem> filtered;
  std::vector<std::size_t> filtered_pos;
  std::vector<ItemVerdict> verdicts(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].long_cot) {
      verdicts[i] = {items[i].id, 0, -1, Route::ColdStartSet, true};
    } else {
      filtered.push_back(items[i]);
      filtered_pos.push_back(i);
    }
  }

  auto no_tool_model = make_model(model::RolloutScriptModel::Phase::NoTool);
  auto difficulty = difficulty_filter(filtered, *no_tool_model, config, &checkpoint);

  auto tool_model = make_model(model::RolloutScriptModel::Phase::Tool);
  auto classified =
      tool_benefit_classify(filtered, difficulty, *tool_model, tools, config, &checkpoint);
  for (std::size_t i = 0; i < classified.size(); ++i)
    verdicts[filtered_pos[i]] = classified[i];

  PipelineResult result;
  result.verdicts = verdicts;
  result.manifest = export_dataset(items, verdicts, config, out_dir);
  result.rl_set_path = out_dir / "rl_set.jsonl";
  result.cold_start_path = out_dir / "cold_start_set.jsonl";
  result.manifest_path = out_dir / "manifest.json";
  return result;
}

}  // namespace agentloop::curation
