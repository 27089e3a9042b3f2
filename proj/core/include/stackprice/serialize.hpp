#pragma once

#include "stackprice/bilevel.hpp"
#include "stackprice/equilibrium.hpp"
#include "stackprice/exploration.hpp"
#include "stackprice/policy.hpp"
#include "stackprice/scenario.hpp"
#include "stackprice/trainer.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace stackprice {

using Json = nlohmann::json;

inline constexpr const char* kMarketSchema = "stackprice.market/1";
inline constexpr const char* kScenarioSchema = "stackprice.scenario/1";
inline constexpr const char* kPolicySchema = "stackprice.policy/1";

Json to_json(const Vec& v);
Vec vec_from_json(const Json& j, const std::string& what);
Json to_json(const Mat& m);  ///< list of rows
Mat mat_from_json(const Json& j, const std::string& what, Eigen::Index cols);

struct MarketDocument {
  MarketInstance market;
  std::optional<DesiredDistribution> Z;
  std::optional<MarketState> state;  ///< present when written by scenario generation
};

Json market_to_json(const MarketInstance& m, const std::optional<DesiredDistribution>& Z = std::nullopt);
MarketDocument market_from_json(const Json& j);

Json scenario_to_json(const ScenarioConfig& cfg);
ScenarioConfig scenario_from_json(const Json& j);

Json equilibrium_to_json(const MarketInstance& m, const PriceVector& pi, const EquilibriumResult& r,
                         const std::optional<DesiredDistribution>& Z = std::nullopt);
Json bounds_to_json(const ExplorationBounds& b, const BoxSuperset& box);
Json bilevel_to_json(const BilevelSolution& s, BilevelMode mode);
Json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const Json& j);

Json policy_to_json(const PolicyParams& p);
PolicyParams policy_from_json(const Json& j);

Json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& j);

/// 17 significant digits, shortest form ("%.17g").
std::string format_double(double x);

/// Comma separated, LF line endings, header first.
class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void header(const std::vector<std::string>& cols);
  CsvWriter& cell(double x);
  CsvWriter& cell(long long x);
  CsvWriter& cell(const std::string& x);
  void end_row();

 private:
  void sep();
  std::ostream& out_;
  bool first_ = true;
};

/// Training log in the `iter,reward,ma100,price_*,xhat_*,phase` layout.
void write_training_log(std::ostream& out, const std::vector<LogRow>& log, int num_stations);
void write_evaluation(std::ostream& out, const Evaluation& ev, int num_stations);

}  // namespace stackprice
