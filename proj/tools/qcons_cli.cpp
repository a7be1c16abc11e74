// qcons: simulate dithered quantized consensus over failing links and
// evaluate the matching analytic performance bounds.
//
// Subcommands:
//   run     single QC/QCF run -> trajectory CSV
//   mc      Monte Carlo ensemble -> stats JSON with bounds inlined
//   bounds  evaluate every closed-form bound for a configuration -> JSON
//   design  quantizer step-size design sweep over p -> CSV

#include "qcons/bounds.hpp"
#include "qcons/consensus.hpp"
#include "qcons/graph.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

using json = nlohmann::json;
using namespace qcons;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Settings {
  std::string graph = "complete:5";
  std::string model = "fixed";
  double delta = 1.0;
  std::optional<long long> levels;
  double a = 1.0, tau = 1.0, scale = 1.0;
  std::optional<double> d0, tau_d;
  std::optional<std::vector<double>> x0;
  std::optional<double> b;
  long long max_iter = 1000;
  long long trials = 1;
  std::uint64_t seed = 0;
  double epsilon = 0.1;
  std::optional<double> pfail;  // overrides the model spec
  long long record_every = -1;
  std::optional<double> excursion_a;
  std::vector<long long> p_sweep;
  std::string out;
};

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

Topology make_topology(const std::string& spec) {
  auto parts = split(spec, ':');
  try {
    if (parts[0] == "complete") return Topology::complete(std::stoi(parts.at(1)));
    if (parts[0] == "path") return Topology::path(std::stoi(parts.at(1)));
    if (parts[0] == "ring") return Topology::ring(std::stoi(parts.at(1)));
    if (parts[0] == "circulant")
      return Topology::circulant(std::stoi(parts.at(1)), std::stoi(parts.at(2)));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("bad graph spec '" + spec + "': " + e.what());
  }
  // anything else is an edge-list path
  try {
    return Topology::load_edge_list(spec);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("cannot load graph: ") + e.what());
  }
}

LinkFailureModel make_model(const Settings& s, Topology topo) {
  auto parts = split(s.model, ':');
  try {
    if (parts[0] == "fixed" && !s.pfail) return LinkFailureModel::fixed(std::move(topo));
    if (parts[0] == "gossip") return LinkFailureModel::gossip(std::move(topo));
    if (parts[0] == "erasure" || s.pfail) {
      double p = s.pfail ? *s.pfail : std::stod(parts.at(1));
      return LinkFailureModel::erasure(std::move(topo), p);
    }
  } catch (const std::exception& e) {
    throw ConfigError("bad model spec '" + s.model + "': " + e.what());
  }
  throw ConfigError("unknown model '" + s.model + "'");
}

WeightSequence make_weights(const Settings& s) {
  WeightSequence w{s.a, s.tau, s.scale, std::nullopt};
  if (s.d0 || s.tau_d) w.delta_schedule = DeltaSchedule{s.d0.value_or(1.0), s.tau_d.value_or(0.0)};
  try {
    w.validate();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return w;
}

void load_json_config(const std::string& path, Settings& s) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  try {
    if (j.contains("graph")) {
      if (j["graph"].is_string()) {
        s.graph = j["graph"].get<std::string>();
      } else {
        const auto& g = j["graph"];
        if (g.contains("edge_list")) {
          s.graph = g["edge_list"].get<std::string>();
        } else {
          std::string gen = g.at("generator").get<std::string>();
          s.graph = gen + ":" + std::to_string(g.at("n").get<int>());
          if (g.contains("k")) s.graph += ":" + std::to_string(g["k"].get<int>());
        }
      }
    }
    if (j.contains("model")) {
      if (j["model"].is_string()) {
        s.model = j["model"].get<std::string>();
      } else {
        s.model = j["model"].at("type").get<std::string>();
        if (j["model"].contains("p_fail"))
          s.model += ":" + std::to_string(j["model"]["p_fail"].get<double>());
      }
    }
    if (j.contains("quantizer")) {
      const auto& q = j["quantizer"];
      if (q.contains("delta")) s.delta = q["delta"].get<double>();
      if (q.contains("levels_p")) s.levels = q["levels_p"].get<long long>();
    }
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      if (w.contains("a")) s.a = w["a"].get<double>();
      if (w.contains("tau")) s.tau = w["tau"].get<double>();
      if (w.contains("s")) s.scale = w["s"].get<double>();
      if (w.contains("d0")) s.d0 = w["d0"].get<double>();
      if (w.contains("tau_d")) s.tau_d = w["tau_d"].get<double>();
    }
    if (j.contains("x0")) {
      if (j["x0"].is_array()) {
        s.x0 = j["x0"].get<std::vector<double>>();
      } else if (j["x0"].contains("uniform_b")) {
        s.b = j["x0"]["uniform_b"].get<double>();
      }
    }
    if (j.contains("b")) s.b = j["b"].get<double>();
    if (j.contains("max_iter")) s.max_iter = j["max_iter"].get<long long>();
    if (j.contains("trials")) s.trials = j["trials"].get<long long>();
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("epsilon")) s.epsilon = j["epsilon"].get<double>();
    if (j.contains("record_every")) s.record_every = j["record_every"].get<long long>();
    if (j.contains("excursion_a")) s.excursion_a = j["excursion_a"].get<double>();
    if (j.contains("p_sweep")) s.p_sweep = j["p_sweep"].get<std::vector<long long>>();
    if (j.contains("out")) s.out = j["out"].get<std::string>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config schema error: ") + e.what());
  }
}

struct Experiment {
  LinkFailureModel model;
  WeightSequence weights;
  QuantizerSpec spec;
  Settings settings;

  SpectralSummary mean_spectrum() const { return spectral(model.mean_laplacian()); }

  BoundInputs bound_inputs() const {
    const SpectralSummary sp = mean_spectrum();
    if (!sp.connected_on_average)
      throw NumericError("lambda2(mean laplacian) <= 0; not connected on average");
    BoundInputs in;
    in.n_nodes = model.base().n_nodes();
    in.m_edges = static_cast<double>(model.base().n_edges());
    in.delta = spec.step;
    in.lambda2 = sp.lambda2;
    in.lambdaN = sp.lambdaN;
    in.b = settings.b.value_or(0.0);
    in.p = spec.levels_p.value_or(0);
    in.epsilon = settings.epsilon;
    in.weights = weights;
    return in;
  }

  RunConfig run_config(Vector x0) const {
    return RunConfig{std::move(x0), model,   weights,    spec, settings.max_iter,
                     settings.record_every,  false,      settings.b, std::nullopt};
  }

  Vector initial_state(std::mt19937_64& rng) const {
    const int n = model.base().n_nodes();
    if (settings.x0) {
      if (static_cast<int>(settings.x0->size()) != n)
        throw ConfigError("x0 length does not match node count");
      Vector x(n);
      for (int i = 0; i < n; ++i) x(i) = (*settings.x0)[i];
      return x;
    }
    if (!settings.b) throw ConfigError("need explicit x0 or b for uniform initial states");
    Vector x(n);
    for (int i = 0; i < n; ++i) x(i) = (2.0 * uniform01(rng) - 1.0) * *settings.b;
    return x;
  }
};

Experiment build_experiment(const Settings& s) {
  Topology topo = make_topology(s.graph);
  LinkFailureModel model = make_model(s, std::move(topo));
  WeightSequence weights = make_weights(s);
  QuantizerSpec spec =
      s.levels ? QuantizerSpec::finite(s.delta, *s.levels) : QuantizerSpec::unbounded(s.delta);
  return Experiment{std::move(model), weights, spec, s};
}

std::FILE* open_out(const Settings& s) {
  if (s.out.empty()) return stdout;
  std::FILE* f = std::fopen(s.out.c_str(), "w");
  if (!f) throw ConfigError("cannot open output file: " + s.out);
  return f;
}

void close_out(std::FILE* f) {
  if (f != stdout) std::fclose(f);
}

int cmd_run(const Settings& s) {
  Experiment ex = build_experiment(s);
  std::mt19937_64 rng(derive_seed(s.seed, 0));
  RunConfig cfg = ex.run_config(ex.initial_state(rng));
  if (cfg.record_every < 0) cfg.record_every = cfg.x0.size() <= 32 ? 1 : 100;

  RunOutcome out = ex.spec.levels_p ? run_qcf(cfg, rng) : run_qc(cfg, rng);
  for (const auto& w : out.warnings) std::cerr << "warning: " << w << "\n";

  std::FILE* f = open_out(s);
  std::fprintf(f, "iteration,x_avg,residual_norm,spread,saturated_flag\n");
  const auto& tr = out.trajectory;
  for (std::size_t k = 0; k < tr.iterations.size(); ++k) {
    const bool sat_row =
        out.status == RunStatus::Saturated && k + 1 == tr.iterations.size();
    std::fprintf(f, "%lld,%.9g,%.9g,%.9g,%d\n", tr.iterations[k], tr.averages[k],
                 tr.residual_norms[k], tr.spreads[k], sat_row ? 1 : 0);
  }
  close_out(f);
  return 0;
}

json bounds_json(const Experiment& ex) {
  BoundInputs in = ex.bound_inputs();
  json j;
  j["lambda2"] = in.lambda2;
  j["lambdaN"] = in.lambdaN;
  j["n_nodes"] = in.n_nodes;
  j["m_edges"] = in.m_edges;
  j["sum_alpha_sq"] = sum_alpha_sq(in.weights);
  j["c_g"] = lyapunov_c_g(in);
  j["prod_one_plus_g"] = prod_one_plus_g(in);
  j["mse_bound"] = mse_bound(in).value;
  j["mse_bound_gossip"] = mse_bound(in, MseVariant::Gossip).value;
  j["mse_bound_refined"] =
      mse_bound(in, MseVariant::Refined, ex.model.mean_active_links_sq()).value;
  if (in.weights.delta_schedule) {
    if (persistence_check(in.weights).generalized_persistent)
      j["mse_bound_time_varying"] = mse_bound(in, MseVariant::TimeVarying).value;
    else
      j["mse_bound_time_varying"] = nullptr;  // generalized persistence fails
  }
  auto pc = persistence_check(in.weights);
  j["persistent"] = pc.persistent;
  j["generalized_persistent"] = pc.generalized_persistent;
  if (in.b > 0.0 && ex.settings.excursion_a) {
    BoundReport r = state_sup_bound(*ex.settings.excursion_a, in, SupBoundForm::FromBall);
    j["state_sup_bound"] = {{"a", *ex.settings.excursion_a},
                            {"value", r.value},
                            {"clamped", r.clamped}};
  }
  if (in.b > 0.0 && in.p >= 1) {
    BoundReport lb = eps_consensus_lb(in);
    j["eps_consensus_lb"] = {{"value", lb.value}, {"clamped", lb.clamped}};
    BoundReport zr = zero_rate_lb(in);
    j["zero_rate_lb"] = {{"value", zr.value}, {"clamped", zr.clamped}};
    j["ratio_approx"] = ratio_approx(in);
    BoundReport sat = state_sup_bound(double(in.p) * in.delta, in, SupBoundForm::FromBall);
    j["saturation_bound"] = {{"value", sat.value}, {"clamped", sat.clamped}};
  }
  return j;
}

int cmd_mc(const Settings& s) {
  if (s.trials < 1) throw ConfigError("trials must be >= 1");
  Experiment ex = build_experiment(s);

  RunConfig cfg = ex.run_config(Vector::Zero(ex.model.base().n_nodes()));
  MonteCarloConfig mc;
  mc.trials = s.trials;
  mc.master_seed = s.seed;
  mc.epsilon = s.epsilon;
  mc.qcf = ex.spec.levels_p.has_value();
  if (s.x0) {
    std::mt19937_64 dummy(0);
    cfg.x0 = ex.initial_state(dummy);
  } else {
    if (!s.b) throw ConfigError("need explicit x0 or b for uniform initial states");
    mc.x0_uniform_b = *s.b;
  }
  EnsembleStats st = monte_carlo(cfg, mc);

  json j;
  j["trials"] = st.trials;
  j["mean_theta"] = st.mean_theta;
  j["std_theta"] = st.std_theta;
  j["empirical_mse"] = st.empirical_mse;
  j["saturation_frequency"] = st.saturation_frequency;
  j["eps_consensus_frequency"] = st.eps_consensus_frequency;
  j["epsilon"] = s.epsilon;
  j["mean_r"] = st.mean_r;
  j["spread_quantiles"] = {{"q10", st.spread_q10}, {"q50", st.spread_q50}, {"q90", st.spread_q90}};
  try {
    j["bounds"] = bounds_json(ex);
  } catch (const NumericError& e) {
    j["bounds"] = nullptr;
    std::cerr << "warning: bounds unavailable: " << e.what() << "\n";
  }

  std::FILE* f = open_out(s);
  const std::string text = j.dump(2);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fputc('\n', f);
  close_out(f);
  return 0;
}

int cmd_bounds(const Settings& s) {
  Experiment ex = build_experiment(s);
  json j = bounds_json(ex);
  std::FILE* f = open_out(s);
  const std::string text = j.dump(2);
  std::fwrite(text.data(), 1, text.size(), f);
  std::fputc('\n', f);
  close_out(f);
  return 0;
}

int cmd_design(const Settings& s) {
  Experiment ex = build_experiment(s);
  if (!s.b) throw ConfigError("design needs the initial-state bound b");
  std::vector<long long> sweep = s.p_sweep;
  if (sweep.empty()) throw ConfigError("design needs a non-empty p sweep");
  std::sort(sweep.begin(), sweep.end());

  BoundInputs base = ex.bound_inputs();
  std::FILE* f = open_out(s);
  std::fprintf(f, "p,bit_rate,delta_star,T_star_clamped,T_zero_rate\n");
  for (long long p : sweep) {
    BoundInputs in = base;
    in.p = p;
    DeltaOptimum opt = optimize_delta(in);
    in.delta = opt.delta_star;
    BoundReport zr = zero_rate_lb(in);
    std::fprintf(f, "%lld,%.9g,%.9g,%.9g,%.9g\n", p, std::log2(2.0 * double(p) + 1.0),
                 opt.delta_star, opt.t_star_clamped, zr.clamped);
  }
  close_out(f);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dithered quantized consensus simulator and bound evaluator"};
  app.require_subcommand(1);

  Settings s;
  std::string config_path;
  std::string p_sweep_csv;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--seed", s.seed, "master RNG seed");
    sub->add_option("--trials", s.trials, "Monte Carlo trials");
    sub->add_option("--iters", s.max_iter, "iteration horizon");
    sub->add_option("--delta", s.delta, "quantization step");
    sub->add_option("--levels", [&s](const CLI::results_t& r) {
      s.levels = std::stoll(r[0]);
      return true;
    }, "finite quantizer level parameter p");
    sub->add_option("--a", s.a, "weight numerator a");
    sub->add_option("--tau", s.tau, "weight decay exponent");
    sub->add_option("--scale", s.scale, "weight scale s");
    sub->add_option("--pfail", [&s](const CLI::results_t& r) {
      s.pfail = std::stod(r[0]);
      return true;
    }, "erasure failure probability");
    sub->add_option("--graph", s.graph, "generator spec or edge-list path");
    sub->add_option("--model", s.model, "fixed | erasure:<p> | gossip");
    sub->add_option("--epsilon", s.epsilon, "consensus tolerance");
    sub->add_option("--b", [&s](const CLI::results_t& r) {
      s.b = std::stod(r[0]);
      return true;
    }, "initial-state bound");
    sub->add_option("--out", s.out, "output path (default stdout)");
  };

  CLI::App* run = app.add_subcommand("run", "single run -> trajectory CSV");
  CLI::App* mc = app.add_subcommand("mc", "Monte Carlo ensemble -> JSON");
  CLI::App* bounds = app.add_subcommand("bounds", "evaluate bounds -> JSON");
  CLI::App* design = app.add_subcommand("design", "step-size design sweep -> CSV");
  for (CLI::App* sub : {run, mc, bounds, design}) add_common(sub);
  design->add_option("--p-sweep", p_sweep_csv, "comma-separated p values");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kExitConfig;
  }

  try {
    // config file first, then flag overrides
    if (!config_path.empty()) {
      Settings from_file;
      load_json_config(config_path, from_file);
      CLI::App* sub = app.get_subcommands().front();
      auto overridden = [&](const std::string& flag) { return sub->count(flag) > 0; };
      Settings merged = from_file;
      if (overridden("--seed")) merged.seed = s.seed;
      if (overridden("--trials")) merged.trials = s.trials;
      if (overridden("--iters")) merged.max_iter = s.max_iter;
      if (overridden("--delta")) merged.delta = s.delta;
      if (overridden("--levels")) merged.levels = s.levels;
      if (overridden("--a")) merged.a = s.a;
      if (overridden("--tau")) merged.tau = s.tau;
      if (overridden("--scale")) merged.scale = s.scale;
      if (overridden("--pfail")) merged.pfail = s.pfail;
      if (overridden("--graph")) merged.graph = s.graph;
      if (overridden("--model")) merged.model = s.model;
      if (overridden("--epsilon")) merged.epsilon = s.epsilon;
      if (overridden("--b")) merged.b = s.b;
      if (overridden("--out")) merged.out = s.out;
      s = merged;
    }
    if (!p_sweep_csv.empty()) {
      s.p_sweep.clear();
      for (const std::string& tok : split(p_sweep_csv, ','))
        if (!tok.empty()) s.p_sweep.push_back(std::stoll(tok));
    }

    if (app.got_subcommand("run")) return cmd_run(s);
    if (app.got_subcommand("mc")) return cmd_mc(s);
    if (app.got_subcommand("bounds")) return cmd_bounds(s);
    if (app.got_subcommand("design")) return cmd_design(s);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric precondition violated: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
