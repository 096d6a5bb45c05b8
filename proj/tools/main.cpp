// Command-line front end: single rollouts, benchmark evaluation, data
// curation, trajectory statistics, and deterministic replay.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "agentloop/blob_store.hpp"
#include "agentloop/curation.hpp"
#include "agentloop/errors.hpp"
#include "agentloop/evalharness.hpp"
#include "agentloop/modelclient.hpp"
#include "agentloop/orchestrator.hpp"
#include "agentloop/prompts.hpp"
#include "agentloop/reward.hpp"
#include "agentloop/sandbox.hpp"
#include "agentloop/search.hpp"
#include "agentloop/util.hpp"

namespace {

using namespace agentloop;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFatal = 1;
constexpr int kExitNoAnswer = 2;   // budget exhausted or format failure
constexpr int kExitDiverged = 3;   // replay did not reproduce the record
constexpr int kExitUsage = 64;

// Options shared by every subcommand that talks to a model.  Precedence is
// flag > environment > config file (CLI11's documented resolution order).
struct ModelOptions {
  std::string mock_file;
  std::string endpoint;
  std::string api_key;
  std::string model_name = "default";

  void attach(CLI::App& cmd) {
    cmd.add_option("--mock", mock_file, "Scripted model spec (JSON file)")
        ->check(CLI::ExistingFile);
    cmd.add_option("--endpoint", endpoint, "Chat-completions endpoint")
        ->envname("MODEL_ENDPOINT");
    cmd.add_option("--api-key", api_key, "Bearer token")->envname("MODEL_API_KEY");
    cmd.add_option("--model", model_name, "Model name sent to the endpoint");
  }

  std::unique_ptr<model::ModelClient> build(model::RolloutScriptModel::Phase phase) const {
    if (!mock_file.empty()) return model::make_mock_from_file(mock_file, phase);
    if (endpoint.empty())
      throw Error(ErrorCode::ConfigError,
                  "no model configured: pass --mock or --endpoint (or set MODEL_ENDPOINT)");
    model::HttpModelConfig cfg;
    cfg.endpoint = endpoint;
    cfg.api_key = api_key;
    cfg.model_name = model_name;
    return std::make_unique<model::HttpModelClient>(cfg);
  }

  json echo() const {
    return {{"mock", mock_file}, {"endpoint", endpoint}, {"model", model_name}};
  }
};

struct SearchOptions {
  std::string fixture_dir;
  bool live = false;
  std::string base_url;
  std::string api_key;

  void attach(CLI::App& cmd) {
    cmd.add_option("--search-fixtures", fixture_dir,
                   "Replay search answers from this fixture directory")
        ->check(CLI::ExistingDirectory);
    cmd.add_flag("--search-live", live, "Query the live search provider");
    cmd.add_option("--search-url", base_url, "Live search provider base URL");
    cmd.add_option("--search-api-key", api_key, "Search provider key")
        ->envname("SEARCH_API_KEY");
  }

  // nullptr when no search backend was requested; the loop then reports
  // searches as tool failures.
  std::unique_ptr<search::SearchClient> build() const {
    search::SearchConfig cfg;
    if (!fixture_dir.empty()) {
      cfg.mode = search::Mode::Replay;
      cfg.fixture_dir = fixture_dir;
    } else if (live) {
      cfg.mode = search::Mode::Live;
      cfg.base_url = base_url;
      cfg.api_key = api_key;
      if (cfg.base_url.empty())
        throw Error(ErrorCode::ConfigError, "--search-live requires --search-url");
    } else {
      return nullptr;
    }
    return std::make_unique<search::SearchClient>(cfg);
  }
};

struct BudgetOptions {
  model::GenerationBudget budget;
  std::uint64_t seed = 0;
  bool seed_set = false;

  // The curate subcommand has its own pipeline --seed, so it skips this one.
  void attach(CLI::App& cmd, bool with_seed = true) {
    cmd.add_option("--max-turns", budget.max_turns, "Model turn budget")
        ->check(CLI::PositiveNumber);
    cmd.add_option("--max-tokens", budget.max_response_tokens, "Per-response token budget")
        ->check(CLI::PositiveNumber);
    cmd.add_option("--temperature", budget.temperature, "Sampling temperature");
    if (with_seed)
      cmd.add_option("--seed", seed, "Deterministic seed")->each([this](const std::string&) {
        seed_set = true;
      });
  }

  model::GenerationBudget resolve() const {
    model::GenerationBudget b = budget;
    if (seed_set) b.seed = seed;
    return b;
  }
};

struct SandboxOptions {
  double timeout_seconds = 300.0;
  long memory_mb = 1024;
  std::string interpreter = "python3";

  void attach(CLI::App& cmd) {
    cmd.add_option("--code-timeout", timeout_seconds, "Python cell timeout in seconds");
    cmd.add_option("--code-memory-mb", memory_mb, "Python kernel memory cap (MiB)");
    cmd.add_option("--python", interpreter, "Python interpreter for the sandbox");
  }

  sandbox::SandboxConfig resolve() const {
    sandbox::SandboxConfig cfg;
    cfg.timeout_seconds = timeout_seconds;
    cfg.memory_mb = memory_mb;
    if (interpreter != "python3")
      cfg.interpreter_cmd = {interpreter, "-c", std::string(prompts::sandbox_kernel_source())};
    return cfg;
  }
};

void write_manifest(const std::filesystem::path& out_dir, const json& extra) {
  json manifest = extra;
  json files = json::object();
  for (const auto& entry : std::filesystem::directory_iterator(out_dir)) {
    if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
    files[entry.path().filename().string()] = {
        {"sha256", sha256_hex(read_file(entry.path()))},
        {"bytes", std::filesystem::file_size(entry.path())}};
  }
  manifest["files"] = std::move(files);
  atomic_write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

// -- rollout -----------------------------------------------------------------

int cmd_rollout(const std::string& question, const std::vector<std::string>& image_paths,
                const ModelOptions& model_opts, const SearchOptions& search_opts,
                const BudgetOptions& budget_opts, const SandboxOptions& sandbox_opts,
                const orchestrator::LoopPolicy& policy, const std::string& out_dir,
                const std::string& run_id) {
  auto model = model_opts.build(model::RolloutScriptModel::Phase::Tool);
  auto search_client = search_opts.build();
  orchestrator::ToolBelt tools;
  tools.sandbox_config = sandbox_opts.resolve();
  tools.search = search_client.get();

  orchestrator::RunRequest req;
  req.id = run_id;
  req.question = question;
  for (const auto& p : image_paths) req.input_images_png.push_back(read_file(p));
  req.budget = budget_opts.resolve();
  req.policy = policy;

  orchestrator::Trajectory traj = orchestrator::run(req, *model, tools);

  std::filesystem::create_directories(out_dir);
  BlobStore blobs(std::filesystem::path(out_dir) / "blobs");
  atomic_write_file(std::filesystem::path(out_dir) / "trajectories.jsonl",
                    orchestrator::serialize(traj, blobs) + "\n");
  write_manifest(out_dir, {{"run_id", run_id}, {"kind", "rollout"}});

  json summary = {{"id", traj.id},
                  {"termination", orchestrator::termination_name(traj.termination)},
                  {"turns", traj.turns.size()},
                  {"final_answer", traj.final_answer ? json(*traj.final_answer) : json()},
                  {"code_execs", traj.counters.code_execs},
                  {"text_searches", traj.counters.text_searches},
                  {"image_searches", traj.counters.image_searches}};
  std::cout << summary.dump() << "\n";
  return traj.termination == orchestrator::Termination::Answered ? kExitOk : kExitNoAnswer;
}

// -- eval --------------------------------------------------------------------

int cmd_eval(const std::string& items_file, const ModelOptions& model_opts,
             const SearchOptions& search_opts, const BudgetOptions& budget_opts,
             const SandboxOptions& sandbox_opts, int workers, const std::string& out_dir,
             const std::string& baseline_file, bool text_search, bool image_search,
             bool resume) {
  auto items = eval::load_benchmark_jsonl(items_file);
  auto model = model_opts.build(model::RolloutScriptModel::Phase::Tool);
  auto search_client = search_opts.build();
  orchestrator::ToolBelt tools;
  tools.sandbox_config = sandbox_opts.resolve();
  tools.search = search_client.get();

  eval::BenchmarkRunOptions options;
  options.budget = budget_opts.resolve();
  options.workers = workers;
  options.allow_text_search = text_search;
  options.allow_image_search = image_search;

  std::filesystem::path traj_path = std::filesystem::path(out_dir) / "trajectories.jsonl";
  if (resume && std::filesystem::exists(traj_path)) {
    BlobStore prior_blobs(std::filesystem::path(out_dir) / "blobs");
    std::ifstream in(traj_path);
    std::string line;
    while (std::getline(in, line)) {
      if (trim_view(line).empty()) continue;
      orchestrator::Trajectory t = orchestrator::deserialize(line, prior_blobs);
      options.resume.emplace(t.id, std::move(t));
    }
    std::cerr << "resuming: " << options.resume.size() << " items already done\n";
  }

  std::cerr << "config: "
            << json{{"items", items_file},
                    {"workers", workers},
                    {"text_search", text_search},
                    {"image_search", image_search},
                    {"model", model_opts.echo()}}
                   .dump()
            << "\n";
  eval::BenchmarkRunResult result = eval::run_benchmark(items, *model, tools, options);

  std::filesystem::create_directories(out_dir);
  BlobStore blobs(std::filesystem::path(out_dir) / "blobs");
  std::string lines;
  for (const auto& traj : result.trajectories)
    lines += orchestrator::serialize(traj, blobs) + "\n";
  atomic_write_file(std::filesystem::path(out_dir) / "trajectories.jsonl", lines);
  atomic_write_file(std::filesystem::path(out_dir) / "report.json",
                    eval::report_to_json(result.report).dump(2) + "\n");
  write_manifest(out_dir, {{"kind", "eval"}, {"items", items.size()}});

  if (!baseline_file.empty()) {
    eval::EvalReport baseline = eval::report_from_json(json::parse(read_file(baseline_file)));
    eval::ReportDelta delta = eval::compare_reports(baseline, result.report);
    std::cerr << "accuracy delta vs baseline: " << delta.average_accuracy
              << "  tool distribution L1: " << delta.distribution_l1 << "\n";
  }

  std::cout << eval::render_accuracy_row(result.report) << "\n";
  std::cerr << eval::render_report_text(result.report);
  return kExitOk;
}

// -- curate ------------------------------------------------------------------

int cmd_curate(const std::string& items_file, const ModelOptions& model_opts,
               const SearchOptions& search_opts, const SandboxOptions& sandbox_opts,
               curation::CurationConfig config, const std::string& out_dir) {
  auto items = curation::load_items_jsonl(items_file);
  auto search_client = search_opts.build();
  orchestrator::ToolBelt tools;
  tools.sandbox_config = sandbox_opts.resolve();
  tools.search = search_client.get();

  std::cerr << "curating " << items.size() << " items (k=" << config.k << ")\n";
  curation::PipelineResult result = curation::run_pipeline(
      items,
      [&](model::RolloutScriptModel::Phase phase) { return model_opts.build(phase); },
      tools, config, out_dir);

  std::cout << result.manifest["counts"].dump() << "\n";
  std::cerr << "wrote " << result.rl_set_path.string() << ", "
            << result.cold_start_path.string() << "\n";
  return kExitOk;
}

// -- stats -------------------------------------------------------------------

int cmd_stats(const std::string& traj_file, std::string blobs_dir, bool csv) {
  if (blobs_dir.empty())
    blobs_dir = (std::filesystem::path(traj_file).parent_path() / "blobs").string();
  BlobStore blobs(blobs_dir);
  std::ifstream in(traj_file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + traj_file);
  std::vector<orchestrator::Trajectory> trajectories;
  std::string line;
  while (std::getline(in, line)) {
    if (trim_view(line).empty()) continue;
    trajectories.push_back(orchestrator::deserialize(line, blobs));
  }
  eval::ToolStats stats = eval::compute_tool_stats(trajectories);
  if (csv) {
    std::cout << eval::render_tool_stats_csv(stats);
  } else {
    json j = {{"trajectories", trajectories.size()},
              {"invocation_rate", stats.invocation_rate},
              {"calls_per_traj_mean", stats.calls_per_traj_mean},
              {"calls_per_traj_std", stats.calls_per_traj_std},
              {"total_calls", stats.total_calls},
              {"counts", stats.counts},
              {"distribution", stats.distribution}};
    std::cout << j.dump(2) << "\n";
  }
  return kExitOk;
}

// -- replay ------------------------------------------------------------------

int cmd_replay(const std::string& traj_file, int line_no, std::string blobs_dir,
               const SearchOptions& search_opts, const SandboxOptions& sandbox_opts) {
  if (blobs_dir.empty())
    blobs_dir = (std::filesystem::path(traj_file).parent_path() / "blobs").string();
  BlobStore blobs(blobs_dir);
  std::ifstream in(traj_file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + traj_file);
  std::string line;
  int current = 0;
  while (std::getline(in, line)) {
    if (trim_view(line).empty()) continue;
    if (++current == line_no) break;
  }
  if (current != line_no)
    throw Error(ErrorCode::Precondition,
                "trajectory file has fewer than " + std::to_string(line_no) + " records");

  orchestrator::Trajectory record = orchestrator::deserialize(line, blobs);
  auto search_client = search_opts.build();
  orchestrator::ToolBelt tools;
  tools.sandbox_config = sandbox_opts.resolve();
  tools.search = search_client.get();

  orchestrator::ReplayResult result = orchestrator::replay(record, tools);
  if (!result.divergence) {
    std::cout << "replay ok: " << record.id << " (" << record.turns.size() << " turns)\n";
    return kExitOk;
  }
  std::cout << "replay diverged at turn " << result.divergence->turn_index << " ["
            << result.divergence->field << "]: " << result.divergence->detail << "\n";
  return kExitDiverged;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Agentic reasoning loop: rollouts, evaluation, curation, replay"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from an INI/TOML file");

  // rollout
  auto* rollout = app.add_subcommand("rollout", "Run one question through the loop");
  std::string question;
  std::vector<std::string> images;
  std::string out_dir = "out/run";
  std::string run_id = "rollout-0";
  orchestrator::LoopPolicy policy;
  bool no_code = false, no_text = false, no_image = false;
  ModelOptions model_opts;
  SearchOptions search_opts;
  BudgetOptions budget_opts;
  SandboxOptions sandbox_opts;
  rollout->add_option("--question", question, "Question text")->required();
  rollout->add_option("--image", images, "Input image (PNG), repeatable")
      ->check(CLI::ExistingFile);
  rollout->add_option("--out", out_dir, "Output directory");
  rollout->add_option("--id", run_id, "Trajectory id");
  rollout->add_flag("--no-code", no_code, "Disable the python tool");
  rollout->add_flag("--no-text-search", no_text, "Disable text search");
  rollout->add_flag("--no-image-search", no_image, "Disable image search");
  model_opts.attach(*rollout);
  search_opts.attach(*rollout);
  budget_opts.attach(*rollout);
  sandbox_opts.attach(*rollout);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Score a benchmark file");
  std::string eval_items, eval_out = "out/eval", baseline_file;
  int eval_workers = 4;
  bool eval_text_search = true, eval_image_search = true, eval_resume = false;
  ModelOptions eval_model;
  SearchOptions eval_search;
  BudgetOptions eval_budget;
  SandboxOptions eval_sandbox;
  eval_cmd->add_option("--items,--bench", eval_items, "Benchmark JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", eval_out, "Output directory");
  eval_cmd->add_option("--workers", eval_workers, "Parallel rollouts")
      ->check(CLI::PositiveNumber);
  eval_cmd->add_option("--baseline", baseline_file, "Prior report.json to diff against")
      ->check(CLI::ExistingFile);
  eval_cmd->add_flag("--text-search,!--no-text-search", eval_text_search,
                     "Allow text search (ablation switch)");
  eval_cmd->add_flag("--image-search,!--no-image-search", eval_image_search,
                     "Allow image search (ablation switch)");
  eval_cmd->add_flag("--resume", eval_resume,
                     "Reuse trajectories already present in the output directory");
  eval_model.attach(*eval_cmd);
  eval_search.attach(*eval_cmd);
  eval_budget.attach(*eval_cmd);
  eval_sandbox.attach(*eval_cmd);

  // curate
  auto* curate = app.add_subcommand("curate", "Filter and split a training pool");
  std::string curate_items, curate_out = "out/curate";
  curation::CurationConfig curation_config;
  ModelOptions curate_model;
  SearchOptions curate_search;
  SandboxOptions curate_sandbox;
  BudgetOptions curate_budget;
  curate->add_option("--items", curate_items, "Candidate pool JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  curate->add_option("--out", curate_out, "Output directory");
  curate->add_option("-k,--rollouts", curation_config.k, "Rollouts per item per phase");
  curate->add_option("--max-correct,--max-correct-for-hard",
                     curation_config.max_correct_for_hard,
                     "Keep items with at most this many no-tool passes");
  curate->add_option("--rl-min-tool-pass", curation_config.rl_min_tool_pass,
                     "Tool passes needed for the RL split");
  curate->add_option("--workers", curation_config.workers, "Parallel items")
      ->check(CLI::PositiveNumber);
  curate->add_option("--seed", curation_config.seed, "Pipeline seed");
  curate_model.attach(*curate);
  curate_search.attach(*curate);
  curate_budget.attach(*curate, /*with_seed=*/false);
  curate_sandbox.attach(*curate);

  // stats
  auto* stats = app.add_subcommand("stats", "Tool-call statistics for saved trajectories");
  std::string stats_file, stats_dir, stats_blobs;
  bool stats_csv = false;
  stats->add_option("--trajectories", stats_file, "Trajectory JSONL");
  stats->add_option("--traj-dir", stats_dir,
                    "Run directory holding trajectories.jsonl and blobs/")
      ->check(CLI::ExistingDirectory);
  stats->add_option("--blobs", stats_blobs, "Blob directory (default: sibling blobs/)");
  stats->add_flag("--csv", stats_csv, "Emit CSV instead of JSON");

  // replay
  auto* replay = app.add_subcommand("replay", "Re-run a recorded trajectory and diff");
  std::string replay_file, replay_blobs;
  int replay_line = 1;
  SearchOptions replay_search;
  SandboxOptions replay_sandbox;
  replay->add_option("--trajectory,--traj", replay_file, "Trajectory JSONL")
      ->required()
      ->check(CLI::ExistingFile);
  replay->add_option("--line", replay_line, "1-based record number")
      ->check(CLI::PositiveNumber);
  replay->add_option("--blobs", replay_blobs, "Blob directory (default: sibling blobs/)");
  replay_search.attach(*replay);
  replay_sandbox.attach(*replay);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);  // prints the message / help text
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*rollout) {
      policy.allow_code = !no_code;
      policy.allow_text_search = !no_text;
      policy.allow_image_search = !no_image;
      return cmd_rollout(question, images, model_opts, search_opts, budget_opts,
                         sandbox_opts, policy, out_dir, run_id);
    }
    if (*eval_cmd)
      return cmd_eval(eval_items, eval_model, eval_search, eval_budget, eval_sandbox,
                      eval_workers, eval_out, baseline_file, eval_text_search,
                      eval_image_search, eval_resume);
    if (*curate) {
      curation_config.budget = curate_budget.resolve();
      curation_config.validate();
      return cmd_curate(curate_items, curate_model, curate_search, curate_sandbox,
                        curation_config, curate_out);
    }
    if (*stats) {
      if (!stats_dir.empty()) {
        if (stats_file.empty())
          stats_file = (std::filesystem::path(stats_dir) / "trajectories.jsonl").string();
        if (stats_blobs.empty())
          stats_blobs = (std::filesystem::path(stats_dir) / "blobs").string();
      }
      if (stats_file.empty())
        throw Error(ErrorCode::ConfigError, "stats needs --trajectories or --traj-dir");
      return cmd_stats(stats_file, stats_blobs, stats_csv);
    }
    if (*replay)
      return cmd_replay(replay_file, replay_line, replay_blobs, replay_search,
                        replay_sandbox);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::ConfigError ? kExitUsage : kExitFatal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFatal;
  }
  return kExitUsage;
}
