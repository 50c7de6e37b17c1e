#include "safemarl/allocator.hpp"
#include "safemarl/config.hpp"
#include "safemarl/eval.hpp"
#include "safemarl/tabular_oracle.hpp"
#include "safemarl/trainer.hpp"
#include "safemarl/transport_env.hpp"
#include "safemarl/verify.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace safemarl;

namespace {

py::dict report_dict(const IterationReport& r) {
  py::dict d;
  d["iter"] = r.iter;
  d["J_R"] = r.j_reward;
  d["J_C"] = r.j_cost;
  d["d"] = r.d;
  d["beta"] = r.beta ? py::cast(*r.beta) : py::none();
  d["c_a"] = r.c_a ? py::cast(*r.c_a) : py::none();
  d["c_b"] = r.c_b ? py::cast(*r.c_b) : py::none();
  d["lambda"] = r.lambda ? py::cast(*r.lambda) : py::none();
  d["L_C"] = r.l_cost;
  d["kl"] = r.kl;
  return d;
}

py::dict rollout(const std::string& config_text, std::uint64_t seed, const Eigen::MatrixXd& actions) {
  if (actions.cols() != 2 * kActDim) throw std::invalid_argument("actions must have 6 columns (robot a, robot b)");
  const Config config = parse_config_text(config_text);
  const TransportEnv env = make_env(config.env);
  EnvState state = env.reset(seed);
  Eigen::MatrixXd midpoints(actions.rows() + 1, 2);
  midpoints.row(0) = state.midpoint().transpose();
  std::vector<double> rewards;
  std::vector<double> costs;
  std::vector<double> link_error;
  Eigen::Index t = 0;
  for (; t < actions.rows() && !state.terminal(); ++t) {
    ActionPair pair;
    for (int i = 0; i < kNumAgents; ++i) {
      pair[i].velocity = Vec2(actions(t, 3 * i), actions(t, 3 * i + 1));
      pair[i].yaw_rate = actions(t, 3 * i + 2);
    }
    auto [next, outcome] = env.step(state, pair);
    state = std::move(next);
    midpoints.row(t + 1) = state.midpoint().transpose();
    rewards.push_back(outcome.reward);
    costs.push_back(outcome.cost);
    link_error.push_back(std::abs((state.robots[0].position - state.robots[1].position).norm() -
                                  env.params().link_length));
  }
  py::dict d;
  d["midpoints"] = Eigen::MatrixXd(midpoints.topRows(t + 1));
  d["rewards"] = rewards;
  d["costs"] = costs;
  d["link_error"] = link_error;
  d["arrived"] = state.arrived;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Safe two-robot transport: simulator, oracles, allocator, trainer and metrics";

  m.def("default_config", [] { return serialize_config(Config{}); });
  m.def("normalize_config", [](const std::string& text) { return serialize_config(parse_config_text(text)); },
        py::arg("text"), "Parse and re-serialize a config, raising ValueError on bad keys or ranges.");

  m.def("rollout", &rollout, py::arg("config_text"), py::arg("seed"), py::arg("actions"));

  m.def("reward_move_forward",
        [](const Vec2& p, const Vec2& prev, const Vec2& goal, double w) { return reward_move_forward(p, prev, goal, w); });
  m.def("reward_destination",
        [](const Vec2& p, const Vec2& goal, double b, double w) { return reward_destination(p, goal, b, w); });
  m.def("cost_collaboration", &cost_collaboration);
  m.def("cost_collision", [](const std::vector<double>& probes, double w) { return cost_collision(probes, w); });

  m.def(
      "decomposition_residual",
      [](int n_states, int m_a, int m_b, double gamma, std::uint64_t seed) {
        const auto game = tabular::random_game(n_states, m_a, m_b, gamma, seed);
        const auto pols = tabular::random_policies(game, seed + 1);
        return tabular::verify_decomposition(game, pols, 4, seed + 2);
      },
      py::arg("n_states"), py::arg("m_a"), py::arg("m_b"), py::arg("gamma"), py::arg("seed"));

  m.def(
      "gp_predict",
      [](const std::vector<double>& betas, const std::vector<double>& ys, double query) {
        if (betas.size() != ys.size()) throw std::invalid_argument("betas and ys differ in length");
        GPWindow window(std::max<std::size_t>(1, betas.size()));
        for (std::size_t i = 0; i < betas.size(); ++i) window.push_observation(betas[i], ys[i]);
        const Prediction p = gp_posterior(gp_fit(window), query);
        return py::make_tuple(p.mean, p.variance);
      },
      py::arg("betas"), py::arg("ys"), py::arg("query"));
  m.def("expected_improvement", &expected_improvement, py::arg("mean"), py::arg("sigma"), py::arg("y_best"));
  m.def(
      "split_budget",
      [](double d, double beta) {
        const Allocation a = split_budget(d, beta);
        return py::make_tuple(a.c_a, a.c_b);
      },
      py::arg("d"), py::arg("beta"));

  m.def("compute_budget", &compute_budget, py::arg("u"), py::arg("j_cost"));
  m.def("lagrange_update", &lagrange_update, py::arg("lam"), py::arg("alpha"), py::arg("l_cost"), py::arg("budget"));

  m.def(
      "straightness",
      [](const Eigen::MatrixXd& path, const Vec2& start, const Vec2& goal) {
        if (path.cols() != 2) throw std::invalid_argument("path must be N x 2");
        std::vector<Vec2> pts;
        for (Eigen::Index i = 0; i < path.rows(); ++i) pts.emplace_back(path(i, 0), path(i, 1));
        return straightness(pts, start, goal);
      },
      py::arg("path"), py::arg("start"), py::arg("goal"));
  m.def("time_consumption", &time_consumption, py::arg("arrived"), py::arg("arrival_step"), py::arg("dt"),
        py::arg("cap_s"));

  m.def("verify", [] {
    py::list out;
    for (const auto& c : run_verification()) {
      py::dict d;
      d["name"] = c.name;
      d["residual"] = c.residual;
      d["threshold"] = c.threshold;
      d["pass"] = c.pass;
      out.append(d);
    }
    return out;
  });

  m.def(
      "train",
      [](const std::string& config_text, std::uint64_t seed, std::optional<std::filesystem::path> out_dir) {
        const Config config = parse_config_text(config_text);
        TrainOptions options;
        options.out_dir = out_dir;
        std::vector<IterationReport> reps;
        {
          py::gil_scoped_release release;
          reps = train(config, seed, options).reports;
        }
        py::list reports;
        for (const auto& r : reps) reports.append(report_dict(r));
        return reports;
      },
      py::arg("config_text"), py::arg("seed"), py::arg("out_dir") = py::none());

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::string& scenario_text, int n, std::uint64_t seed) {
        const Config scenario = parse_config_text(scenario_text);
        EvalOptions options;
        options.n = n;
        options.seed = seed;
        options.time_cap = scenario.eval.time_cap;
        return report_to_json(run_eval(checkpoint, scenario.env, options));
      },
      py::arg("checkpoint"), py::arg("scenario_text"), py::arg("n"), py::arg("seed"));

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
}
