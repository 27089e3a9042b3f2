#include "cli.hpp"

#include "CLI11.hpp"

#include "stackprice/bilevel.hpp"
#include "stackprice/equilibrium.hpp"
#include "stackprice/exploration.hpp"
#include "stackprice/scenario.hpp"
#include "stackprice/serialize.hpp"
#include "stackprice/trainer.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

#ifndef STACKPRICE_VERSION
#define STACKPRICE_VERSION "dev"
#endif

namespace stackprice::cli {

namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

// A relative default lands under the output root; explicit paths are used as given.
fs::path resolve_output(const std::string& given, const std::string& fallback) {
  if (!given.empty()) return fs::path(given);
  return output_root() / fallback;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw InvalidInput(what + ": cannot parse '" + item + "' as a number");
    }
  }
  if (out.empty()) throw InvalidInput(what + ": empty list");
  return out;
}

Vec to_vec(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

struct Run {
  std::string command;
  std::vector<std::string> argv;
  Json inputs = Json::object();
  std::optional<std::uint64_t> seed;
  std::vector<fs::path> outputs;
  std::string started = utc_now();
};

// One manifest.json per output directory, keyed by output file name.
void write_manifests(const Run& run) {
  std::map<fs::path, std::vector<fs::path>> by_dir;
  for (const fs::path& p : run.outputs) by_dir[p.has_parent_path() ? p.parent_path() : fs::path(".")].push_back(p);
  for (const auto& [dir, files] : by_dir) {
    const fs::path path = dir / "manifest.json";
    Json doc = Json::object();
    if (fs::exists(path)) {
      try {
        doc = read_json_file(path.string());
      } catch (const Error&) {
        doc = Json::object();
      }
    }
    if (!doc.contains("outputs") || !doc.at("outputs").is_object()) doc["outputs"] = Json::object();
    for (const fs::path& f : files) {
      Json rec;
      rec["command"] = run.command;
      rec["argv"] = run.argv;
      rec["inputs"] = run.inputs;
      rec["seed"] = run.seed ? Json(*run.seed) : Json(nullptr);
      rec["version"] = STACKPRICE_VERSION;
      rec["started"] = run.started;
      rec["finished"] = utc_now();
      rec["path"] = f.string();
      doc["outputs"][f.filename().string()] = rec;
    }
    doc["schema"] = "stackprice.manifest/1";
    write_json_file(path.string(), doc);
  }
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& given, std::ostream& err) {
  if (given) return *given;
  std::random_device rd;
  const std::uint64_t seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  err << "seed: " << seed << " (derived; pass --seed to reproduce)\n";
  return seed;
}

MarketDocument load_market(const std::string& path) { return market_from_json(read_json_file(path)); }

ScenarioConfig load_scenario(const std::string& config, const std::string& name) {
  if (!config.empty() && !name.empty()) throw InvalidInput("pass either --config or --fixture, not both");
  if (!name.empty()) return fixture(name);
  if (config.empty()) throw InvalidInput("a scenario --config or --fixture is required");
  return scenario_from_json(read_json_file(config));
}

DesiredDistribution require_Z(const MarketDocument& doc, const std::string& override_text, int M) {
  if (!override_text.empty()) {
    DesiredDistribution Z{to_vec(parse_list(override_text, "--Z"))};
    require(Z.z.size() == M, "--Z has wrong length");
    Z.validate();
    return Z;
  }
  if (!doc.Z) throw InvalidInput("the market file carries no Z; pass --Z");
  return *doc.Z;
}

// Options shared by the subcommands, filled by CLI11.
struct Options {
  std::string scenario, config, fixture_name, out, prices, Z, space = "theorem1", mode = "feasibility",
      beta = "auto", strategy = "auto", price_box, policy, optimizer = "adam", scheme = "pg",
      explore_space = "box";
  std::optional<std::uint64_t> seed;
  std::uint64_t t = 0;
  int samples = 100, jobs = 1, iters = 1000, explore = 250, batch = 32, epochs = 20, states = 100;
  double lr = 1e-3, tol = 1e-8;
};

int cmd_scenario_gen(const Options& o, Run& run, std::ostream& out, std::ostream& err) {
  ScenarioConfig sc = load_scenario(o.config, o.fixture_name);
  const std::uint64_t seed = o.seed ? *o.seed : sc.seed;
  run.seed = seed;
  const GeneratedState gs = generate_state(sc, o.t, seed);
  Json j = market_to_json(gs.market, sc.desired());
  j["state"] = to_json(gs.s);
  j["generated"] = {{"scenario", sc.name}, {"t", o.t}, {"seed", seed}, {"redraws", gs.redraws}};
  const fs::path path = resolve_output(o.out, "scenario.json");
  ensure_parent(path);
  write_json_file(path.string(), j);
  run.outputs.push_back(path);
  out << "wrote " << path.string() << '\n';
  (void)err;
  return kExitOk;
}

int cmd_scenario_fixture(const Options& o, Run& run, std::ostream& out) {
  const ScenarioConfig sc = fixture(o.fixture_name);
  const fs::path path = resolve_output(o.out, o.fixture_name + ".json");
  ensure_parent(path);
  write_json_file(path.string(), scenario_to_json(sc));
  run.outputs.push_back(path);
  out << "wrote " << path.string() << '\n';
  return kExitOk;
}

int cmd_solve_ne(const Options& o, Run& run, std::ostream& out) {
  const MarketDocument doc = load_market(o.scenario);
  run.inputs["scenario"] = o.scenario;
  const PriceVector pi = to_vec(parse_list(o.prices, "--prices"));
  require(pi.size() == doc.market.num_stations(), "--prices must have one entry per station");
  SolverConfig cfg;
  cfg.tol = o.tol;
  require(o.scheme == "pg" || o.scheme == "eg", "--scheme must be pg or eg");
  cfg.scheme = o.scheme == "eg" ? VeScheme::Extragradient : VeScheme::ProjectedGradient;
  const EquilibriumResult r = solve_vne(doc.market, pi, cfg);
  Json j = equilibrium_to_json(doc.market, pi, r, doc.Z);
  j["kkt"] = verify_kkt(doc.market, r, pi).max_residual;
  const fs::path path = resolve_output(o.out, "ne.json");
  ensure_parent(path);
  write_json_file(path.string(), j);
  run.outputs.push_back(path);
  out << "residual " << format_double(r.residual) << " iterations " << r.iterations << '\n';
  return kExitOk;
}

int cmd_bounds(const Options& o, Run& run, std::ostream& out) {
  const MarketDocument doc = load_market(o.scenario);
  run.inputs["scenario"] = o.scenario;
  const ExplorationBounds b = compute_bounds(doc.market);
  const BoxSuperset box = box_superset(b);
  const fs::path path = resolve_output(o.out, "bounds.json");
  ensure_parent(path);
  write_json_file(path.string(), bounds_to_json(b, box));
  run.outputs.push_back(path);
  box.require_bounded();
  out << "gamma " << format_double(b.gamma) << " Gamma " << format_double(b.Gamma) << '\n';
  return kExitOk;
}

int cmd_explore(const Options& o, Run& run, std::ostream& out, std::ostream& err) {
  const MarketDocument doc = load_market(o.scenario);
  run.inputs["scenario"] = o.scenario;
  const MarketInstance& m = doc.market;
  const DesiredDistribution Z = require_Z(doc, o.Z, m.num_stations());
  require(o.samples >= 1, "--samples must be positive");
  const ExplorationBounds b = compute_bounds(m);
  PriceBox box;
  if (o.space == "theorem1") {
    box = box_superset(b).require_bounded();
  } else if (o.space.rfind("box:", 0) == 0) {
    const std::vector<double> lh = parse_list(o.space.substr(4), "--space box");
    require(lh.size() == 2, "--space box:LO,HI needs exactly two numbers");
    box = uniform_box(m.num_stations(), lh[0], lh[1]);
  } else {
    throw InvalidInput("--space must be theorem1 or box:LO,HI");
  }
  const std::uint64_t seed = resolve_seed(o.seed, err);
  run.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<PriceVector> prices;
  for (int k = 0; k < o.samples; ++k) prices.push_back(sample_uniform(box, rng));

  std::vector<EnvironmentStep> steps(prices.size());
  std::vector<std::string> failures(prices.size());
  const int jobs = std::max(1, o.jobs);
  auto work = [&](int w) {
    for (std::size_t k = static_cast<std::size_t>(w); k < prices.size(); k += static_cast<std::size_t>(jobs)) {
      try {
        steps[k] = environment_step(m, prices[k], Z);
      } catch (const Error& e) {
        failures[k] = e.what();
      }
    }
  };
  if (jobs == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  for (const std::string& f : failures) {
    if (!f.empty()) throw SolverFailure("equilibrium solve failed during exploration: " + f);
  }

  const fs::path path = resolve_output(o.out, "explore.csv");
  ensure_parent(path);
  std::ofstream file(path, std::ios::binary);
  CsvWriter csv(file);
  const int M = m.num_stations();
  std::vector<std::string> cols{"sample", "reward", "interior", "member"};
  for (int j = 1; j <= M; ++j) cols.push_back("price_" + std::to_string(j));
  for (int j = 1; j <= M; ++j) cols.push_back("xhat_" + std::to_string(j));
  csv.header(cols);
  double best = -1.0;
  for (std::size_t k = 0; k < prices.size(); ++k) {
    csv.cell(static_cast<long long>(k)).cell(steps[k].reward);
    csv.cell(static_cast<long long>(steps[k].equilibrium.interior ? 1 : 0));
    csv.cell(static_cast<long long>(membership_relaxed(b, prices[k]) ? 1 : 0));
    for (int j = 0; j < M; ++j) csv.cell(prices[k](j));
    for (int j = 0; j < M; ++j) csv.cell(steps[k].x_hat(j));
    csv.end_row();
    best = std::max(best, steps[k].reward);
  }
  file.close();
  run.outputs.push_back(path);
  out << "samples " << prices.size() << " best reward " << format_double(best) << '\n';
  return kExitOk;
}

int cmd_train(const Options& o, const CLI::App& sub, Run& run, std::ostream& out, std::ostream& err) {
  ScenarioConfig sc = load_scenario(o.config, o.fixture_name);
  run.inputs["config"] = o.config.empty() ? Json("fixture:" + o.fixture_name) : Json(o.config);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::Adam;
  if (!o.config.empty()) {
    const Json j = read_json_file(o.config);
    if (j.contains("train")) cfg = train_config_from_json(j.at("train"));
  }
  if (sub.count("--iters")) cfg.n_iter = o.iters;
  if (sub.count("--explore")) cfg.n_explore = o.explore;
  if (sub.count("--batch")) cfg.batch = o.batch;
  if (sub.count("--epochs")) cfg.epochs = o.epochs;
  if (sub.count("--lr")) cfg.lr = o.lr;
  if (sub.count("--optimizer")) {
    require(o.optimizer == "adam" || o.optimizer == "ascent", "--optimizer must be adam or ascent");
    cfg.optimizer = o.optimizer == "adam" ? OptimizerKind::Adam : OptimizerKind::Ascent;
  }
  if (sub.count("--explore-space")) {
    require(o.explore_space == "box" || o.explore_space == "theorem1", "--explore-space must be box or theorem1");
    cfg.explore = o.explore_space == "theorem1" ? ExploreSpace::Relaxed : ExploreSpace::Box;
  }
  cfg.seed = resolve_seed(o.seed, err);
  run.seed = cfg.seed;
  cfg.validate();

  const TrainingResult res = run_training(sc, cfg);
  const fs::path dir = resolve_output(o.out, "train");
  fs::create_directories(dir);
  {
    std::ofstream log(dir / "log.csv", std::ios::binary);
    write_training_log(log, res.log, sc.num_stations);
  }
  write_json_file((dir / "policy.json").string(), policy_to_json(res.params));
  Json echo = scenario_to_json(sc);
  echo["train"] = train_config_to_json(cfg);
  write_json_file((dir / "config.json").string(), echo);
  run.outputs = {dir / "log.csv", dir / "policy.json", dir / "config.json"};
  const double ma = res.log.empty() ? 0.0 : res.log.back().ma100;
  out << "iterations " << res.log.size() << " ma100 " << format_double(ma) << '\n';
  return kExitOk;
}

int cmd_evaluate(const Options& o, Run& run, std::ostream& out, std::ostream& err) {
  const PolicyParams params = policy_from_json(read_json_file(o.policy));
  ScenarioConfig sc;
  if (o.config.empty() && o.fixture_name.empty()) {
    // A training directory's config.json sits next to its policy.
    sc = scenario_from_json(read_json_file((fs::path(o.policy).parent_path() / "config.json").string()));
  } else {
    sc = load_scenario(o.config, o.fixture_name);
  }
  require(sc.num_stations == params.config.num_stations && sc.num_companies == params.config.num_companies,
          "policy shape does not match the scenario");
  run.inputs["policy"] = o.policy;
  const std::uint64_t seed = resolve_seed(o.seed, err);
  run.seed = seed;
  const Evaluation ev = evaluate(params, sc, o.states, seed);
  const fs::path path = resolve_output(o.out, "eval.csv");
  ensure_parent(path);
  std::ofstream file(path, std::ios::binary);
  write_evaluation(file, ev, sc.num_stations);
  file.close();
  run.outputs.push_back(path);
  out << "mean reward " << format_double(ev.mean_reward) << '\n';
  return kExitOk;
}

int cmd_solve_exact(const Options& o, Run& run, std::ostream& out) {
  const MarketDocument doc = load_market(o.scenario);
  run.inputs["scenario"] = o.scenario;
  const MarketInstance& m = doc.market;
  const DesiredDistribution Z = require_Z(doc, o.Z, m.num_stations());
  require(o.mode == "feasibility" || o.mode == "miqp", "--mode must be feasibility or miqp");
  const BilevelMode mode = o.mode == "miqp" ? BilevelMode::Miqp : BilevelMode::Feasibility;
  ExactOptions opt;
  opt.jobs = std::max(1, o.jobs);
  if (o.strategy == "enumerate") {
    opt.strategy = SearchStrategy::Enumerate;
  } else if (o.strategy == "bnb") {
    opt.strategy = SearchStrategy::BranchAndBound;
  } else {
    require(o.strategy == "auto", "--strategy must be auto, enumerate or bnb");
  }
  double beta = 0.0;
  if (o.beta == "auto") {
    beta = initial_beta(m);
  } else {
    beta = parse_list(o.beta, "--beta").front();
    require(beta > 0.0, "--beta must be positive");
  }
  BigMProgram prog = build_program(m, Z, beta, mode);
  if (!o.price_box.empty()) {
    const std::vector<double> lh = parse_list(o.price_box, "--price-box");
    require(lh.size() == 2 && lh[0] <= lh[1], "--price-box needs LO,HI");
    prog.price_box = uniform_box(m.num_stations(), lh[0], lh[1]);
  }
  const BilevelSolution s = mode == BilevelMode::Miqp ? solve_miqp(prog, opt) : solve_feasibility(prog, opt);
  Json j = bilevel_to_json(s, mode);
  if (s.status != BilevelStatus::Infeasible) {
    // Replay the prices through the equilibrium solver.
    const EquilibriumResult ne = solve_vne(m, s.pi);
    j["replay"] = {{"x_star", to_json(ne.x_star)},
                   {"reward", reward(ne.x_star, m.fleets(), Z)},
                   {"max_deviation", (ne.x_star - s.x_star).lpNorm<Eigen::Infinity>()}};
  }
  const fs::path path = resolve_output(o.out, "exact.json");
  ensure_parent(path);
  write_json_file(path.string(), j);
  run.outputs.push_back(path);
  out << "status " << to_string(s.status) << " beta " << format_double(s.beta_used) << '\n';
  return s.status == BilevelStatus::Infeasible ? kExitDomain : kExitOk;
}

}  // namespace

int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Charging-price leader tools: equilibria, exploration bounds, bandit training, exact bilevel"};
  app.name("stackprice");
  app.require_subcommand(1);
  app.set_version_flag("--version", STACKPRICE_VERSION);
  Options o;

  auto add_seed = [&o](CLI::App* s) { s->add_option("--seed", o.seed, "Seed for all randomness (derived and logged when absent)"); };

  CLI::App* scen = app.add_subcommand("scenario", "Generate market states or emit fixture configs");
  scen->require_subcommand(1);
  CLI::App* gen = scen->add_subcommand("gen", "Write one generated market state as a market JSON");
  gen->add_option("--config", o.config, "Scenario config JSON");
  gen->add_option("--fixture", o.fixture_name, "Named fixture: shenzhen-like or desk");
  gen->add_option("--t", o.t, "Iteration index of the state");
  gen->add_option("--out", o.out, "Output market JSON");
  add_seed(gen);
  CLI::App* fix = scen->add_subcommand("fixture", "Write a named fixture's scenario config");
  fix->add_option("--name", o.fixture_name, "shenzhen-like or desk")->required();
  fix->add_option("--out", o.out, "Output config JSON");

  CLI::App* ne = app.add_subcommand("solve-ne", "Solve the followers' equilibrium at given prices");
  ne->add_option("--scenario", o.scenario, "Market JSON")->required();
  ne->add_option("--prices", o.prices, "Comma separated prices, one per station")->required();
  ne->add_option("--scheme", o.scheme, "pg (projected gradient) or eg (extragradient)");
  ne->add_option("--tol", o.tol, "Natural-map residual tolerance");
  ne->add_option("--out", o.out, "Output JSON");

  CLI::App* ex = app.add_subcommand("explore", "Sample prices from an exploration space and solve each equilibrium");
  ex->add_option("--scenario", o.scenario, "Market JSON")->required();
  ex->add_option("--space", o.space, "theorem1 or box:LO,HI");
  ex->add_option("--samples", o.samples, "Number of price draws");
  ex->add_option("--Z", o.Z, "Desired distribution override");
  ex->add_option("--jobs", o.jobs, "Worker threads");
  ex->add_option("--out", o.out, "Output CSV");
  add_seed(ex);

  CLI::App* tr = app.add_subcommand("train", "Run the contextual-bandit training loop");
  tr->add_option("--config", o.config, "Scenario config JSON (optional \"train\" block)");
  tr->add_option("--fixture", o.fixture_name, "Named fixture instead of --config");
  tr->add_option("--iters", o.iters, "Total iterations");
  tr->add_option("--explore", o.explore, "Leading exploration iterations");
  tr->add_option("--batch", o.batch, "Batch size");
  tr->add_option("--epochs", o.epochs, "Update epochs per iteration");
  tr->add_option("--lr", o.lr, "Learning rate");
  tr->add_option("--optimizer", o.optimizer, "adam (default) or ascent");
  tr->add_option("--explore-space", o.explore_space, "box or theorem1");
  tr->add_option("--out", o.out, "Output directory");
  add_seed(tr);

  CLI::App* ev = app.add_subcommand("evaluate", "Evaluate a policy with deterministic prices");
  ev->add_option("--policy", o.policy, "policy.json checkpoint")->required();
  ev->add_option("--config", o.config, "Scenario config JSON (default: config.json next to the policy)");
  ev->add_option("--fixture", o.fixture_name, "Named fixture instead of --config");
  ev->add_option("--states", o.states, "Held-out states");
  ev->add_option("--out", o.out, "Output CSV");
  add_seed(ev);

  CLI::App* se = app.add_subcommand("solve-exact", "Solve the big-M feasibility or MIQP program");
  se->add_option("--scenario", o.scenario, "Market JSON")->required();
  se->add_option("--mode", o.mode, "feasibility or miqp");
  se->add_option("--beta", o.beta, "auto or a positive value");
  se->add_option("--strategy", o.strategy, "auto, enumerate or bnb");
  se->add_option("--price-box", o.price_box, "Optional LO,HI bound on every price");
  se->add_option("--Z", o.Z, "Desired distribution override");
  se->add_option("--jobs", o.jobs, "Worker threads for enumeration");
  se->add_option("--out", o.out, "Output JSON");

  CLI::App* bd = app.add_subcommand("bounds", "Compute exploration-space constants and the LP box");
  bd->add_option("--scenario", o.scenario, "Market JSON")->required();
  bd->add_option("--out", o.out, "Output JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, err, err);
    return kExitUsage;
  }

  Run run;
  for (int k = 1; k < argc; ++k) run.argv.emplace_back(argv[k]);
  int code = kExitOk;
  try {
    if (gen->parsed()) {
      run.command = "scenario gen";
      code = cmd_scenario_gen(o, run, out, err);
    } else if (fix->parsed()) {
      run.command = "scenario fixture";
      code = cmd_scenario_fixture(o, run, out);
    } else if (ne->parsed()) {
      run.command = "solve-ne";
      code = cmd_solve_ne(o, run, out);
    } else if (ex->parsed()) {
      run.command = "explore";
      code = cmd_explore(o, run, out, err);
    } else if (tr->parsed()) {
      run.command = "train";
      code = cmd_train(o, *tr, run, out, err);
    } else if (ev->parsed()) {
      run.command = "evaluate";
      code = cmd_evaluate(o, run, out, err);
    } else if (se->parsed()) {
      run.command = "solve-exact";
      code = cmd_solve_exact(o, run, out);
    } else if (bd->parsed()) {
      run.command = "bounds";
      code = cmd_bounds(o, run, out);
    }
    write_manifests(run);
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Unbounded& e) {
    write_manifests(run);
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return code;
}

}  // namespace stackprice::cli
