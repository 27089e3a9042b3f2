#pragma once

#include "stackprice/market.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace stackprice {

/// s = (d¹, …, d^N, r₁, …, r_N), length 2NM.
using MarketState = Vec;

struct DenseLayer {
  Mat W;  ///< out × in
  Vec b;
};

/// Fully connected network with ReLU on hidden layers and a linear output.
struct Mlp {
  std::vector<DenseLayer> layers;

  int input_size() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
  int output_size() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
  Eigen::Index parameter_count() const;
};

struct PolicyConfig {
  int num_companies = 1;
  int num_stations = 1;
  std::vector<int> hidden = {256, 64, 16};
  double price_lo = 0.0;
  double price_hi = 5.0;
  double sigma_min = 1e-3;

  int state_size() const { return 2 * num_companies * num_stations; }
};

/// Diagonal Gaussian pricing policy. μ(s) = lo + (hi − lo)·logistic(mu_net(ŝ)),
/// σ(s) = softplus(sigma_net(ŝ)) + σ_min, with ŝ = (s − input_shift) ⊙ input_scale
/// a fixed (untrained) standardization of the state.
struct PolicyParams {
  PolicyConfig config;
  Mlp mu_net;
  Mlp sigma_net;
  Vec input_shift;
  Vec input_scale;
  std::uint64_t seed = 0;

  /// Trainable parameter count (both networks).
  Eigen::Index size() const { return mu_net.parameter_count() + sigma_net.parameter_count(); }
  /// Flat order: mu_net then sigma_net; per layer W (column-major) then b.
  Vec to_flat() const;
  void from_flat(const Vec& theta);
};

/// Uniform fan-in initialization, U(−1/√fan_in, 1/√fan_in) for weights and biases.
PolicyParams init_policy(const PolicyConfig& cfg, std::uint64_t seed);

/// Same shapes with every weight and bias zero.
PolicyParams zero_policy(const PolicyConfig& cfg);

struct PolicyOutput {
  Vec mu;
  Vec sigma;
};

PolicyOutput forward(const PolicyParams& params, const MarketState& s);

/// π = μ + σ ⊙ ξ, ξ ~ N(0, I). Not clipped.
PriceVector sample(const PolicyParams& params, const MarketState& s, std::mt19937_64& rng);
PriceVector sample(const PolicyParams& params, const MarketState& s, std::uint64_t seed);
PriceVector sample_from(const PolicyOutput& out, std::mt19937_64& rng);

/// Exact log-density, including the −(M/2)·log(2π) constant.
double log_prob(const PolicyParams& params, const MarketState& s, const PriceVector& pi);
double log_prob_from(const PolicyOutput& out, const PriceVector& pi);

/// Gradient of log_prob with respect to the flat parameter vector.
Vec grad_log_prob(const PolicyParams& params, const MarketState& s, const PriceVector& pi);

/// Σ_b w_b·log ρ(π_b | s_b) over a batch (states and prices as columns). When
/// `grad` is non-null it receives the flat gradient.
double weighted_log_likelihood(const PolicyParams& params, const Mat& states, const Mat& prices,
                               const Vec& weights, Vec* grad = nullptr);

/// Numerically stable scalar helpers shared with tests.
double logistic(double z);
double softplus(double z);

}  // namespace stackprice
