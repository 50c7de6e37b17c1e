#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "safemarl/allocator.hpp"
#include "safemarl/config.hpp"
#include "safemarl/verify.hpp"

#include "json.hpp"

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

using namespace safemarl;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "safemarl_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Run cli(const std::string& args) {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = std::string("\"") + SAFEMARL_CLI_PATH + "\" " + args + " >\"" + out.string() + "\" 2>\"" +
                          err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

int line_count(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n' ? 1 : 0;
  return n;
}

const char* kTinyRun =
    "trainer.iterations = 100\n"
    "trainer.n_envs = 2\n"
    "trainer.horizon = 30\n"
    "trainer.minibatch = 32\n"
    "trainer.checkpoint_every = 25\n"
    "policy.hidden = 16\n"
    "env.episode_cap = 15\n"
    "eval.episodes = 3\n";

}  // namespace

TEST_CASE("empty and comment-only configs give the defaults") {
  CHECK(parse_config_text("") == Config{});
  CHECK(parse_config_text("# nothing\n\n   \n") == Config{});
  const Config c{};
  CHECK(c.trainer.gamma == 0.99);
  CHECK(c.trainer.gae_lambda == 0.95);
  CHECK(c.trainer.clip == 0.2);
  CHECK(c.trainer.kl_threshold == 0.02);
  CHECK(c.trainer.epochs == 4);
  CHECK(c.trainer.minibatch == 256);
  CHECK(c.trainer.lagrange_rate == 0.05);
  CHECK(c.trainer.cost_limit == 1.0);
  CHECK(c.policy.rate == 3e-4);
  CHECK(c.policy.critic_rate == 1e-3);
  CHECK(c.policy.hidden == 64);
  CHECK(c.allocator.window == 20u);
  CHECK(c.allocator.grid_size == 41);
  CHECK(c.env.params.weights.move_forward == 1.0);
  CHECK(c.env.params.weights.destination == 10.0);
  CHECK(c.env.params.weights.collaboration == 1.0);
  CHECK(c.env.params.weights.collision == 5.0);
  CHECK(c.env.scenario.gate_width == 1.5);
  CHECK(c.env.scenario.gate_depth == 0.8);
  CHECK(c.env.scenario.episode_cap == 200);
  CHECK(c.eval.time_cap == 35.0);
}

TEST_CASE("range errors name the key and the line") {
  try {
    parse_config_text("trainer.gamma = 0.9\ntrainer.epsilon = 1.5\n");
    FAIL("expected a range error");
  } catch (const ConfigError& e) {
    CHECK(e.key() == "trainer.epsilon");
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("trainer.epsilon") != std::string::npos);
  }
  auto key_of = [](const std::string& text) {
    try {
      parse_config_text(text);
    } catch (const ConfigError& e) {
      return e.key();
    }
    return std::string("<none>");
  };
  CHECK(key_of("trainer.bogus = 1") == "trainer.bogus");
  CHECK(key_of("trainer.epochs = four") == "trainer.epochs");
  CHECK(key_of("trainer.epochs = 2.5") == "trainer.epochs");
  CHECK(key_of("trainer.gamma = nan") == "trainer.gamma");
  CHECK(key_of("trainer.gamma = 1.0") == "trainer.gamma");
  CHECK(key_of("trainer.mode = ippo") == "trainer.mode");
  CHECK(key_of("env.kind = maze") == "env.kind");
  CHECK(key_of("env.gate_width = 0") == "env.gate_width");
  CHECK(key_of("trainer.freeze_multipliers = maybe") == "trainer.freeze_multipliers");
  CHECK(key_of("trainer.gamma =") == "trainer.gamma");
  CHECK(key_of("just words") == "just words");
  CHECK(key_of("trainer.gamma = 0.95 # trailing comment") == "<none>");
}

TEST_CASE("property: serialize then parse is the identity") {
  CHECK(parse_config_text(serialize_config(Config{})) == Config{});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    Config c;
    c.trainer.gamma = 0.5 + 0.49 * unit(rng);
    c.trainer.clip = 0.01 + 0.9 * unit(rng);
    c.trainer.cost_limit = 10.0 * unit(rng);
    c.policy.rate = 1e-5 + 1e-2 * unit(rng);
    c.allocator.kernel.length_scale = 0.01 + unit(rng);
    c.env.scenario.gate_width = 0.5 + 2.0 * unit(rng);
    c.env.params.weights.collision = 10.0 * unit(rng);
    c.trainer.iterations = static_cast<int>(1000 * unit(rng));
    c.trainer.freeze_multipliers = unit(rng) < 0.5;
    c.trainer.mode = static_cast<TrainMode>(trial % 5);
    const std::string text = serialize_config(c);
    const Config back = parse_config_text(text);
    CHECK(back == c);
    CHECK(back.trainer.gamma == c.trainer.gamma);
    CHECK(back.policy.rate == c.policy.rate);
    CHECK(serialize_config(back) == text);
  }
  // Every documented key appears exactly once in the serialization.
  const std::string text = serialize_config(Config{});
  for (const auto& k : config_keys()) CHECK(text.find(k.name + " = ") != std::string::npos);
  CHECK(line_count(text) == static_cast<int>(config_keys().size()));
}

TEST_CASE("file parsing overlays defaults and reports missing files") {
  const fs::path p = work_dir() / "cfg.txt";
  write(p, "env.kind = forest\nenv.forest_trees = 4\n");
  const Config c = parse_config(p);
  CHECK(c.env.kind == ScenarioKind::forest);
  CHECK(c.env.scenario.forest_trees == 4);
  CHECK(c.trainer.gamma == 0.99);
  CHECK_THROWS_AS(parse_config(work_dir() / "absent.txt"), ConfigError);
}

TEST_CASE("cli: usage and validation exit codes") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("train --out x").code == 1);
  CHECK(cli("eval --checkpoint x").code == 1);
  CHECK(cli("--help").code == 0);

  const fs::path bad = work_dir() / "bad.txt";
  write(bad, "trainer.epsilon = 1.5\n");
  const Run r = cli("train --config \"" + bad.string() + "\" --seed 1 --out \"" + (work_dir() / "never").string() + "\"");
  CHECK(r.code == 2);
  CHECK(r.err.find("trainer.epsilon") != std::string::npos);
  CHECK(cli("train --seed 1 --mode ippo --out \"" + (work_dir() / "never").string() + "\"").code == 2);
  CHECK(cli("eval --checkpoint \"" + (work_dir() / "none.json").string() + "\" --seed 1").code == 2);
  CHECK(cli("export --run \"" + (work_dir() / "no_run").string() + "\"").code == 2);
  CHECK(cli("export --run x --what pictures").code == 1);
}

TEST_CASE("cli: verify passes and lists every check") {
  const Run r = cli("verify");
  CHECK(r.code == 0);
  for (const char* name : {"advantage decomposition", "bellman residual", "gp posterior", "expected improvement",
                           "policy loss gradient", "critic loss gradient"}) {
    CHECK(r.out.find(name) != std::string::npos);
  }
  CHECK(r.out.find("FAIL") == std::string::npos);
}

TEST_CASE("verify detects a sign error injected into expected improvement") {
  VerifyOptions opt;
  opt.n_games = 5;
  opt.gp_windows = 5;
  opt.grad_cases = 2;
  opt.mc_samples = 100000;
  CHECK(all_passed(run_verification(opt)));
  opt.acquisition = [](double mu, double sigma, double best) { return -expected_improvement(mu, sigma, best); };
  const auto checks = run_verification(opt);
  CHECK_FALSE(all_passed(checks));
  for (const auto& c : checks) {
    if (c.name.find("monte carlo") != std::string::npos) CHECK_FALSE(c.pass);
  }
}

TEST_CASE("cli: train, eval and export end to end") {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path cfg = work_dir() / "tiny.txt";
  write(cfg, kTinyRun);
  const fs::path run = work_dir() / "run";
  const Run t = cli("train --config \"" + cfg.string() + "\" --seed 3 --out \"" + run.string() + "\"");
  REQUIRE(t.code == 0);
  CHECK(fs::exists(run / "checkpoint.json"));
  CHECK(fs::exists(run / "report.csv"));
  CHECK(fs::exists(run / "allocation.csv"));

  const fs::path report = work_dir() / "eval" / "report.json";
  const Run e = cli("eval --checkpoint \"" + (run / "checkpoint.json").string() + "\" --scenario \"" + cfg.string() +
                    "\" --seed 4 --out \"" + report.string() + "\" --traces \"" + (work_dir() / "traces").string() +
                    "\"");
  REQUIRE(e.code == 0);
  const nlohmann::json j = nlohmann::json::parse(slurp(report));
  CHECK(j.at("n_episodes") == 3);
  CHECK(j.at("collision_rate").get<double>() >= 0.0);
  CHECK(j.at("arrival_rate").get<double>() <= 1.0);
  CHECK(fs::exists(work_dir() / "traces" / "episode_2.csv"));
  CHECK(cli("eval --checkpoint \"" + (run / "checkpoint.json").string() + "\" --seed 4 --n 0").code == 2);

  const fs::path mismatched = work_dir() / "dt.txt";
  write(mismatched, "env.dt = 0.05\n");
  CHECK(cli("eval --checkpoint \"" + (run / "checkpoint.json").string() + "\" --scenario \"" + mismatched.string() +
            "\" --seed 4 --n 1")
            .code == 2);

  const fs::path ex1 = work_dir() / "ex1";
  const fs::path ex2 = work_dir() / "ex2";
  REQUIRE(cli("export --run \"" + run.string() + "\" --out \"" + ex1.string() + "\"").code == 0);
  REQUIRE(cli("export --run \"" + run.string() + "\" --what all --out \"" + ex2.string() + "\"").code == 0);
  for (const char* f : {"curves.csv", "allocation.csv", "trace.csv"}) {
    REQUIRE(fs::exists(ex1 / f));
    CHECK(slurp(ex1 / f) == slurp(ex2 / f));
  }
  const std::string curves = slurp(ex1 / "curves.csv");
  const std::string original = slurp(run / "report.csv");
  CHECK(curves.substr(0, curves.find('\n')) == original.substr(0, original.find('\n')));
  CHECK(line_count(curves) == 101);

  REQUIRE(cli("export --run \"" + run.string() + "\" --what curves").code == 0);
  CHECK(fs::exists(run / "export" / "curves.csv"));

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  CHECK(seconds < 60.0);
}
