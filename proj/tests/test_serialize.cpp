#include "stackprice/serialize.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

using namespace stackprice;

TEST(Serialize, VectorsRoundTripExactly) {
  const Vec v = (Vec(4) << 0.1, -1.0 / 3.0, 1e-300, 6.02e23).finished();
  EXPECT_EQ(vec_from_json(Json::parse(to_json(v).dump()), "v"), v);
  const double inf = std::numeric_limits<double>::infinity();
  const Vec w = (Vec(2) << inf, 1.0).finished();
  EXPECT_TRUE(to_json(w)[0].is_null());
  EXPECT_EQ(vec_from_json(to_json(w), "w")(0), inf);
  EXPECT_THROW(vec_from_json(Json("nope"), "x"), InvalidInput);
}

TEST(Serialize, MatricesAreRowLists) {
  Mat m(2, 3);
  m << 1, 2, 3, 4, 5, 6;
  const Json j = to_json(m);
  EXPECT_EQ(j[1][0], 4.0);
  EXPECT_EQ(mat_from_json(j, "m", 3), m);
  EXPECT_THROW(mat_from_json(j, "m", 2), InvalidInput);
}

TEST(Serialize, MarketRoundTrip) {
  std::mt19937_64 rng(1);
  stackprice::testing::RandomMarketOptions opt;
  opt.cap_fraction = 0.6;
  const MarketInstance m = stackprice::testing::random_market(rng, 3, 2, opt);
  const DesiredDistribution Z{Vec::Constant(3, 1.0 / 3)};
  const MarketDocument doc = market_from_json(Json::parse(market_to_json(m, Z).dump()));
  ASSERT_TRUE(doc.Z.has_value());
  EXPECT_EQ(doc.Z->z, Z.z);
  EXPECT_EQ(doc.market.stations().c, m.stations().c);
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(doc.market.company(i).demand, m.company(i).demand);
    EXPECT_EQ(doc.market.company(i).G, m.company(i).G);
    EXPECT_EQ(doc.market.r(i), m.r(i));
  }
  Json bad = market_to_json(m);
  bad["schema"] = "other/9";
  EXPECT_THROW(market_from_json(bad), InvalidInput);
}

TEST(Serialize, ScenarioRoundTrip) {
  ScenarioConfig sc = fixture("shenzhen-like");
  sc.cap_fraction = Vec::Constant(4, 0.5);
  const ScenarioConfig back = scenario_from_json(Json::parse(scenario_to_json(sc).dump()));
  EXPECT_EQ(back.name, sc.name);
  EXPECT_EQ(back.fleet, sc.fleet);
  EXPECT_EQ(back.Z, sc.Z);
  EXPECT_EQ(back.tau, sc.tau);
  EXPECT_EQ(*back.cap_fraction, *sc.cap_fraction);
  EXPECT_EQ(back.seed, sc.seed);
  EXPECT_EQ(generate_state(back, 5).s, generate_state(sc, 5).s);

  Json missing = scenario_to_json(sc);
  missing.erase("tau");
  EXPECT_THROW(scenario_from_json(missing), InvalidInput);
}

TEST(Serialize, PolicyRoundTripIsBitExact) {
  PolicyConfig cfg;
  cfg.num_companies = 2;
  cfg.num_stations = 2;
  PolicyParams p = init_policy(cfg, 42);
  p.input_shift = Vec::LinSpaced(8, -1, 1);
  p.input_scale = Vec::LinSpaced(8, 0.5, 2);
  const PolicyParams q = policy_from_json(Json::parse(policy_to_json(p).dump()));
  EXPECT_EQ(q.to_flat(), p.to_flat());
  EXPECT_EQ(q.input_shift, p.input_shift);
  EXPECT_EQ(q.input_scale, p.input_scale);
  EXPECT_EQ(q.seed, 42u);
  const Vec s = Vec::Ones(8);
  EXPECT_EQ(forward(q, s).mu, forward(p, s).mu);

  Json broken = policy_to_json(p);
  broken["input_shift"] = to_json(Vec(Vec::Zero(3)));
  EXPECT_THROW(policy_from_json(broken), InvalidInput);
}

TEST(Serialize, TrainConfigRoundTrip) {
  TrainConfig c;
  c.n_iter = 77;
  c.n_explore = 7;
  c.optimizer = OptimizerKind::Adam;
  c.explore = ExploreSpace::Relaxed;
  c.seed = 123456789012345ULL;
  const TrainConfig b = train_config_from_json(train_config_to_json(c));
  EXPECT_EQ(b.n_iter, 77);
  EXPECT_EQ(b.n_explore, 7);
  EXPECT_EQ(b.optimizer, OptimizerKind::Adam);
  EXPECT_EQ(b.explore, ExploreSpace::Relaxed);
  EXPECT_EQ(b.seed, c.seed);
}

TEST(Serialize, CsvFormatting) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
  std::ostringstream out;
  CsvWriter w(out);
  w.header({"a", "b", "c"});
  w.cell(1.5).cell(7LL).cell(std::string("x"));
  w.end_row();
  EXPECT_EQ(out.str(), "a,b,c\n1.5,7,x\n");
}

TEST(Serialize, EvaluationCsvLayout) {
  Evaluation ev;
  ev.rows.push_back({0, 0.75, (Vec(2) << 1, 2).finished(), (Vec(2) << 0.4, 0.6).finished(),
                     (Vec(2) << 0.1, -0.1).finished()});
  std::ostringstream out;
  write_evaluation(out, ev, 2);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "state,reward,price_1,price_2,xhat_1,xhat_2,gap_1,gap_2");
}

TEST(Serialize, JsonFilesRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "stackprice_serialize_test.json";
  const Json j = {{"a", 1}, {"b", {1.25, 2.5}}};
  write_json_file(path.string(), j);
  EXPECT_EQ(read_json_file(path.string()), j);
  std::filesystem::remove(path);
  EXPECT_THROW(read_json_file(path.string()), InvalidInput);
}
