#include "safemarl/config.hpp"
#include "safemarl/eval.hpp"
#include "safemarl/trainer.hpp"
#include "safemarl/verify.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace safemarl;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

int cmd_train(const fs::path& config_path, std::uint64_t seed, const fs::path& out_dir, const std::string& mode,
              int iterations) {
  Config config = config_path.empty() ? Config{} : parse_config(config_path);
  if (!mode.empty()) config.trainer.mode = train_mode_from_string(mode);
  if (iterations >= 0) config.trainer.iterations = iterations;
  config.validate();
  TrainOptions options;
  options.out_dir = out_dir;
  options.on_iteration = [](const IterationReport& r) {
    std::cerr << "iter " << r.iter << "  J_R " << r.j_reward << "  J_C " << r.j_cost << "  d " << r.d << "\n";
  };
  train(config, seed, options);
  std::cout << "wrote " << (out_dir / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_eval(const fs::path& checkpoint, const fs::path& scenario, int n, std::uint64_t seed, const fs::path& out,
             const fs::path& traces) {
  if (!fs::is_regular_file(checkpoint)) throw ValidationError("checkpoint not found: " + checkpoint.string());
  const Config scenario_config = scenario.empty() ? Config{} : parse_config(scenario);
  EvalOptions options;
  options.n = n > 0 ? n : scenario_config.eval.episodes;
  if (n == 0) throw ValidationError("--n must be >= 1");
  options.seed = seed;
  options.time_cap = scenario_config.eval.time_cap;
  options.gamma = scenario_config.trainer.gamma;
  if (!traces.empty()) options.trace_dir = traces;
  const EvalReport report = run_eval(checkpoint, scenario_config.env, options);
  const std::string json = report_to_json(report);
  if (out.empty()) {
    std::cout << json;
  } else {
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    write_file(out, json);
    std::cout << "collision_rate " << report.collision_rate << "  arrival_rate " << report.arrival_rate
              << "  mean_time_s " << report.mean_time_s << "\n";
  }
  return 0;
}

int cmd_verify() {
  const auto checks = run_verification();
  print_checks(std::cout, checks);
  return all_passed(checks) ? 0 : kExitRuntime;
}

int cmd_export(const fs::path& run_dir, const std::string& what, fs::path out_dir) {
  if (!fs::is_directory(run_dir)) throw ValidationError("run directory not found: " + run_dir.string());
  if (out_dir.empty()) out_dir = run_dir / "export";
  fs::create_directories(out_dir);
  const bool all = what == "all";
  if (all || what == "curves") {
    const fs::path report = run_dir / "report.csv";
    if (!fs::exists(report)) throw ValidationError("missing run data: " + report.string());
    write_file(out_dir / "curves.csv", read_file(report));
  }
  if (all || what == "allocation") {
    const fs::path alloc = run_dir / "allocation.csv";
    if (!fs::exists(alloc)) throw ValidationError("missing run data: " + alloc.string());
    write_file(out_dir / "allocation.csv", read_file(alloc));
  }
  if (all || what == "traces") {
    const fs::path checkpoint = run_dir / "checkpoint.json";
    if (!fs::exists(checkpoint)) throw ValidationError("missing run data: " + checkpoint.string());
    const TrainingState state = load_checkpoint(checkpoint);
    const TransportEnv env = make_env(state.config.env);
    const std::array<const GaussianPolicy*, kNumAgents> policies{&state.policy(0), &state.policy(1)};
    std::ofstream trace(out_dir / "trace.csv", std::ios::binary | std::ios::trunc);
    if (!trace) throw std::runtime_error("cannot write trace into " + out_dir.string());
    trace_episode(policies, env, eval_episode_seed(state.seed, 0), state.config.eval.time_cap,
                  state.config.trainer.gamma, &trace);
  }
  std::cout << "exported " << what << " to " << out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"safemarl: constrained two-robot transport training and evaluation"};
  app.require_subcommand(1);

  auto* train_cmd = app.add_subcommand("train", "train policies");
  fs::path config_path;
  std::uint64_t seed = 0;
  fs::path out_dir;
  std::string mode;
  int iterations = -1;
  train_cmd->add_option("--config", config_path, "config file (key = value)");
  train_cmd->add_option("--seed", seed, "run seed")->required();
  train_cmd->add_option("--out", out_dir, "output directory")->required();
  train_cmd->add_option("--mode", mode, "full | uca | penalty | shared | macpo");
  train_cmd->add_option("--iterations", iterations, "override trainer.iterations");

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  fs::path checkpoint;
  fs::path scenario;
  int n = -1;
  std::uint64_t eval_seed = 0;
  fs::path report_path;
  fs::path traces;
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint.json")->required();
  eval_cmd->add_option("--scenario", scenario, "scenario file (env.* keys)");
  eval_cmd->add_option("--n", n, "episodes (default eval.episodes)");
  eval_cmd->add_option("--seed", eval_seed, "evaluation seed")->required();
  eval_cmd->add_option("--out", report_path, "report.json");
  eval_cmd->add_option("--traces", traces, "directory for per-episode trace CSVs");

  auto* verify_cmd = app.add_subcommand("verify", "run oracle checks");

  auto* export_cmd = app.add_subcommand("export", "write plot-ready CSVs from a run directory");
  fs::path run_dir;
  std::string what = "all";
  fs::path export_out;
  export_cmd->add_option("--run", run_dir, "run directory")->required();
  export_cmd->add_option("--what", what, "curves | allocation | traces | all")
      ->check(CLI::IsMember({"curves", "allocation", "traces", "all"}));
  export_cmd->add_option("--out", export_out, "output directory (default <run>/export)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, seed, out_dir, mode, iterations);
    if (*eval_cmd) return cmd_eval(checkpoint, scenario, n, eval_seed, report_path, traces);
    if (*verify_cmd) return cmd_verify();
    if (*export_cmd) return cmd_export(run_dir, what, export_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
