#include "stackprice/serialize.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace stackprice {

namespace {

const Json& field(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw InvalidInput(where + ": missing field '" + key + "'");
  return j.at(key);
}

double number(const Json& j, const std::string& what) {
  // Infinite bounds are written as null.
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  if (!j.is_number()) throw InvalidInput(what + ": expected a number");
  return j.get<double>();
}

Json mlp_to_json(const Mlp& net) {
  Json layers = Json::array();
  for (const DenseLayer& l : net.layers) {
    layers.push_back({{"rows", l.W.rows()},
                      {"cols", l.W.cols()},
                      {"W", std::vector<double>(l.W.data(), l.W.data() + l.W.size())},
                      {"b", to_json(l.b)}});
  }
  return layers;
}

Mlp mlp_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidInput(what + ": expected a layer list");
  Mlp net;
  for (const Json& l : j) {
    const auto rows = field(l, "rows", what).get<Eigen::Index>();
    const auto cols = field(l, "cols", what).get<Eigen::Index>();
    const auto w = field(l, "W", what).get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols) throw InvalidInput(what + ": weight array has wrong size");
    DenseLayer layer;
    layer.W = Eigen::Map<const Mat>(w.data(), rows, cols);
    layer.b = vec_from_json(field(l, "b", what), what + ".b");
    if (layer.b.size() != rows) throw InvalidInput(what + ": bias has wrong size");
    net.layers.push_back(std::move(layer));
  }
  return net;
}

}  // namespace

Json to_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) {
    if (std::isfinite(v(k))) {
      a.push_back(v(k));
    } else {
      a.push_back(nullptr);
    }
  }
  return a;
}

Vec vec_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw InvalidInput(what + ": expected an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<Eigen::Index>(k)) = number(j[k], what);
  return v;
}

Json to_json(const Mat& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(to_json(Vec(m.row(r).transpose())));
  return rows;
}

Mat mat_from_json(const Json& j, const std::string& what, Eigen::Index cols) {
  if (!j.is_array()) throw InvalidInput(what + ": expected a list of rows");
  Mat m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vec row = vec_from_json(j[r], what);
    if (row.size() != cols) throw InvalidInput(what + ": row has wrong length");
    m.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return m;
}

Json market_to_json(const MarketInstance& m, const std::optional<DesiredDistribution>& Z) {
  Json j;
  j["schema"] = kMarketSchema;
  j["stations"] = {{"tau", to_json(m.stations().tau)}, {"c", to_json(m.stations().c)}};
  Json cs = Json::array();
  for (const Company& c : m.companies()) {
    cs.push_back({{"fleet", c.fleet},
                  {"d", to_json(c.demand)},
                  {"e_arr", to_json(c.e_arr)},
                  {"e_pro", to_json(c.e_pro)},
                  {"G", to_json(c.G)},
                  {"h", to_json(c.h)}});
  }
  j["companies"] = cs;
  if (Z) j["Z"] = to_json(Z->z);
  return j;
}

MarketDocument market_from_json(const Json& j) {
  const std::string where = "market";
  if (j.contains("schema") && j.at("schema") != kMarketSchema) {
    throw InvalidInput("market: unsupported schema " + j.at("schema").dump());
  }
  const Json& st = field(j, "stations", where);
  StationSet stations{vec_from_json(field(st, "tau", where), "stations.tau"),
                      vec_from_json(field(st, "c", where), "stations.c")};
  require(stations.tau.size() == stations.c.size(), "market: tau and c lengths differ");
  const Eigen::Index M = stations.c.size();
  std::vector<Company> companies;
  const Json& cs = field(j, "companies", where);
  if (!cs.is_array() || cs.empty()) throw InvalidInput("market: companies must be a nonempty list");
  for (const Json& c : cs) {
    Company co;
    const Json& fleet = field(c, "fleet", where);
    if (!fleet.is_number_integer()) throw InvalidInput("market: fleet must be an integer");
    co.fleet = fleet.get<int>();
    co.demand = vec_from_json(field(c, "d", where), "company.d");
    co.e_arr = vec_from_json(field(c, "e_arr", where), "company.e_arr");
    co.e_pro = vec_from_json(field(c, "e_pro", where), "company.e_pro");
    if (c.contains("G")) {
      co.G = mat_from_json(c.at("G"), "company.G", M);
      co.h = vec_from_json(field(c, "h", where), "company.h");
    } else {
      co.G.resize(0, M);
      co.h.resize(0);
    }
    companies.push_back(std::move(co));
  }
  MarketDocument doc;
  doc.market = assemble_market(std::move(stations), std::move(companies));
  if (j.contains("Z") && !j.at("Z").is_null()) {
    DesiredDistribution Z{vec_from_json(j.at("Z"), "Z")};
    require(Z.z.size() == M, "market: Z has wrong length");
    Z.validate();
    doc.Z = Z;
  }
  if (j.contains("state")) doc.state = vec_from_json(j.at("state"), "state");
  return doc;
}

Json scenario_to_json(const ScenarioConfig& c) {
  Json j;
  j["schema"] = kScenarioSchema;
  j["name"] = c.name;
  j["num_stations"] = c.num_stations;
  j["num_companies"] = c.num_companies;
  j["fleet"] = c.fleet;
  j["soc_threshold"] = c.soc_threshold;
  j["soc_mean"] = c.soc_mean;
  j["soc_spread"] = c.soc_spread;
  j["e_pro_base"] = to_json(c.e_pro_base);
  j["e_pro_noise"] = c.e_pro_noise;
  j["e_arr_base"] = to_json(c.e_arr_base);
  j["e_arr_noise"] = c.e_arr_noise;
  j["d_min"] = c.d_min;
  j["d_max"] = c.d_max;
  j["tau"] = to_json(c.tau);
  j["c"] = to_json(c.c);
  j["Z"] = to_json(c.Z);
  j["cap_fraction"] = c.cap_fraction ? to_json(*c.cap_fraction) : Json(nullptr);
  j["price_lo"] = c.price_lo;
  j["price_hi"] = c.price_hi;
  j["seed"] = c.seed;
  return j;
}

ScenarioConfig scenario_from_json(const Json& j) {
  const std::string w = "scenario";
  if (j.contains("schema") && j.at("schema") != kScenarioSchema) {
    throw InvalidInput("scenario: unsupported schema " + j.at("schema").dump());
  }
  ScenarioConfig c;
  try {
    c.name = j.value("name", std::string("custom"));
    c.num_stations = field(j, "num_stations", w).get<int>();
    c.num_companies = field(j, "num_companies", w).get<int>();
    c.fleet = field(j, "fleet", w).get<std::vector<int>>();
    c.soc_threshold = j.value("soc_threshold", 0.55);
    c.soc_mean = field(j, "soc_mean", w).get<std::vector<double>>();
    c.soc_spread = field(j, "soc_spread", w).get<std::vector<double>>();
    c.e_pro_base = vec_from_json(field(j, "e_pro_base", w), "e_pro_base");
    c.e_pro_noise = j.value("e_pro_noise", 0.0);
    c.e_arr_base = vec_from_json(field(j, "e_arr_base", w), "e_arr_base");
    c.e_arr_noise = j.value("e_arr_noise", 0.0);
    c.d_min = field(j, "d_min", w).get<double>();
    c.d_max = field(j, "d_max", w).get<double>();
    c.tau = vec_from_json(field(j, "tau", w), "tau");
    c.c = vec_from_json(field(j, "c", w), "c");
    c.Z = vec_from_json(field(j, "Z", w), "Z");
    if (j.contains("cap_fraction") && !j.at("cap_fraction").is_null()) {
      c.cap_fraction = vec_from_json(j.at("cap_fraction"), "cap_fraction");
    }
    c.price_lo = j.value("price_lo", 0.0);
    c.price_hi = j.value("price_hi", 5.0);
    c.seed = j.value("seed", std::uint64_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("scenario: ") + e.what());
  }
  c.validate();
  return c;
}

Json equilibrium_to_json(const MarketInstance& m, const PriceVector& pi, const EquilibriumResult& r,
                         const std::optional<DesiredDistribution>& Z) {
  Json j;
  j["prices"] = to_json(pi);
  j["x_star"] = to_json(r.x_star);
  Json lam = Json::array();
  for (const Vec& l : r.lambda_star) lam.push_back(to_json(l));
  j["lambda_star"] = lam;
  j["nu_star"] = to_json(r.nu_star);
  j["residual"] = r.residual;
  j["iterations"] = r.iterations;
  j["interior"] = r.interior;
  j["polished"] = r.polished;
  const Vec x_hat = m.aggregate(r.x_star) / m.total_fleet();
  j["x_hat"] = to_json(x_hat);
  if (Z) j["reward"] = reward(r.x_star, m.fleets(), *Z);
  return j;
}

Json bounds_to_json(const ExplorationBounds& b, const BoxSuperset& box) {
  Json j;
  j["alpha"] = b.alpha;
  j["Psi"] = to_json(b.Psi);
  j["r_bar_max"] = b.r_bar_max;
  j["r_bar_min"] = b.r_bar_min;
  j["z_bar"] = b.z_bar;
  j["z_under"] = b.z_under;
  j["gamma"] = b.gamma;
  j["Gamma"] = b.Gamma;
  j["G_pi"] = to_json(b.G_pi);
  j["box"] = {{"lo", to_json(box.box.lo)}, {"hi", to_json(box.box.hi)}};
  j["unbounded_coordinates"] = box.unbounded_coordinates;
  Json v = Json::array();
  for (const Vec& p : box.vertices) v.push_back(to_json(p));
  j["vertices"] = v;
  return j;
}

Json bilevel_to_json(const BilevelSolution& s, BilevelMode mode) {
  Json j;
  j["mode"] = to_string(mode);
  j["status"] = to_string(s.status);
  if (s.status != BilevelStatus::Infeasible) {
    j["prices"] = to_json(s.pi);
    j["x_star"] = to_json(s.x_star);
    j["lambda_star"] = to_json(s.lambda_star);
    j["nu_star"] = to_json(s.nu_star);
    j["pattern"] = s.pattern;
    j["objective"] = s.objective;
    j["margin_ratio"] = s.margin_ratio;
  }
  j["beta_used"] = s.beta_used;
  Json trail = Json::array();
  for (const BetaAttempt& a : s.beta_trail) trail.push_back({{"beta", a.beta}, {"outcome", a.outcome}});
  j["beta_trail"] = trail;
  j["nodes"] = s.nodes;
  j["leaves"] = s.leaves;
  return j;
}

Json train_config_to_json(const TrainConfig& c) {
  return {{"n_iter", c.n_iter},
          {"n_explore", c.n_explore},
          {"batch", c.batch},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"optimizer", to_string(c.optimizer)},
          {"seed", c.seed},
          {"explore", to_string(c.explore)},
          {"normalize_inputs", c.normalize_inputs},
          {"normalization_states", c.normalization_states}};
}

TrainConfig train_config_from_json(const Json& j) {
  TrainConfig c;
  c.n_iter = j.value("n_iter", c.n_iter);
  c.n_explore = j.value("n_explore", c.n_explore);
  c.batch = j.value("batch", c.batch);
  c.epochs = j.value("epochs", c.epochs);
  c.lr = j.value("lr", c.lr);
  const std::string opt = j.value("optimizer", std::string("ascent"));
  require(opt == "ascent" || opt == "adam", "train config: optimizer must be ascent or adam");
  c.optimizer = opt == "adam" ? OptimizerKind::Adam : OptimizerKind::Ascent;
  c.seed = j.value("seed", c.seed);
  const std::string ex = j.value("explore", std::string("box"));
  require(ex == "box" || ex == "theorem1", "train config: explore must be box or theorem1");
  c.explore = ex == "theorem1" ? ExploreSpace::Relaxed : ExploreSpace::Box;
  c.normalize_inputs = j.value("normalize_inputs", c.normalize_inputs);
  c.normalization_states = j.value("normalization_states", c.normalization_states);
  c.validate();
  return c;
}

Json policy_to_json(const PolicyParams& p) {
  Json j;
  j["schema"] = kPolicySchema;
  j["num_companies"] = p.config.num_companies;
  j["num_stations"] = p.config.num_stations;
  j["hidden"] = p.config.hidden;
  j["head"] = {{"mean", "logistic"},
               {"sigma", "softplus"},
               {"price_lo", p.config.price_lo},
               {"price_hi", p.config.price_hi},
               {"sigma_min", p.config.sigma_min}};
  j["seed"] = p.seed;
  j["input_shift"] = to_json(p.input_shift);
  j["input_scale"] = to_json(p.input_scale);
  j["mu_net"] = mlp_to_json(p.mu_net);
  j["sigma_net"] = mlp_to_json(p.sigma_net);
  return j;
}

PolicyParams policy_from_json(const Json& j) {
  const std::string w = "policy";
  if (j.contains("schema") && j.at("schema") != kPolicySchema) {
    throw InvalidInput("policy: unsupported schema " + j.at("schema").dump());
  }
  PolicyConfig cfg;
  try {
    cfg.num_companies = field(j, "num_companies", w).get<int>();
    cfg.num_stations = field(j, "num_stations", w).get<int>();
    cfg.hidden = field(j, "hidden", w).get<std::vector<int>>();
    const Json& head = field(j, "head", w);
    cfg.price_lo = field(head, "price_lo", w).get<double>();
    cfg.price_hi = field(head, "price_hi", w).get<double>();
    cfg.sigma_min = field(head, "sigma_min", w).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("policy: ") + e.what());
  }
  PolicyParams p = zero_policy(cfg);
  p.seed = j.value("seed", std::uint64_t{0});
  p.input_shift = vec_from_json(field(j, "input_shift", w), "input_shift");
  p.input_scale = vec_from_json(field(j, "input_scale", w), "input_scale");
  const Mlp mu = mlp_from_json(field(j, "mu_net", w), "mu_net");
  const Mlp sd = mlp_from_json(field(j, "sigma_net", w), "sigma_net");
  auto same_shape = [](const Mlp& a, const Mlp& b) {
    if (a.layers.size() != b.layers.size()) return false;
    for (std::size_t k = 0; k < a.layers.size(); ++k) {
      if (a.layers[k].W.rows() != b.layers[k].W.rows() || a.layers[k].W.cols() != b.layers[k].W.cols()) return false;
    }
    return true;
  };
  require(same_shape(mu, p.mu_net) && same_shape(sd, p.sigma_net),
          "policy: layer shapes do not match the declared market shape");
  require(p.input_shift.size() == cfg.state_size() && p.input_scale.size() == cfg.state_size(),
          "policy: normalization vectors have wrong length");
  p.mu_net = mu;
  p.sigma_net = sd;
  return p;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
  if (!out) throw Error("write failed: " + path);
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void CsvWriter::header(const std::vector<std::string>& cols) {
  for (const std::string& c : cols) cell(c);
  end_row();
}

void CsvWriter::sep() {
  if (!first_) out_ << ',';
  first_ = false;
}

CsvWriter& CsvWriter::cell(double x) {
  sep();
  out_ << format_double(x);
  return *this;
}

CsvWriter& CsvWriter::cell(long long x) {
  sep();
  out_ << x;
  return *this;
}

CsvWriter& CsvWriter::cell(const std::string& x) {
  sep();
  out_ << x;
  return *this;
}

void CsvWriter::end_row() {
  out_ << '\n';
  first_ = true;
}

void write_training_log(std::ostream& out, const std::vector<LogRow>& log, int M) {
  CsvWriter csv(out);
  std::vector<std::string> cols{"iter", "reward", "ma100"};
  for (int j = 1; j <= M; ++j) cols.push_back("price_" + std::to_string(j));
  for (int j = 1; j <= M; ++j) cols.push_back("xhat_" + std::to_string(j));
  cols.emplace_back("phase");
  csv.header(cols);
  for (const LogRow& r : log) {
    csv.cell(static_cast<long long>(r.iter)).cell(r.reward).cell(r.ma100);
    for (int j = 0; j < M; ++j) csv.cell(r.price(j));
    for (int j = 0; j < M; ++j) csv.cell(r.x_hat(j));
    csv.cell(r.phase);
    csv.end_row();
  }
}

void write_evaluation(std::ostream& out, const Evaluation& ev, int M) {
  CsvWriter csv(out);
  std::vector<std::string> cols{"state", "reward"};
  for (int j = 1; j <= M; ++j) cols.push_back("price_" + std::to_string(j));
  for (int j = 1; j <= M; ++j) cols.push_back("xhat_" + std::to_string(j));
  for (int j = 1; j <= M; ++j) cols.push_back("gap_" + std::to_string(j));
  csv.header(cols);
  for (const EvaluationRow& r : ev.rows) {
    csv.cell(static_cast<long long>(r.index)).cell(r.reward);
    for (int j = 0; j < M; ++j) csv.cell(r.price(j));
    for (int j = 0; j < M; ++j) csv.cell(r.x_hat(j));
    for (int j = 0; j < M; ++j) csv.cell(r.gap(j));
    csv.end_row();
  }
}

}  // namespace stackprice
