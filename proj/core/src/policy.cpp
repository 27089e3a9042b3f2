#include "stackprice/policy.hpp"

#include <cmath>

namespace stackprice {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

Mlp make_mlp(int in, const std::vector<int>& hidden, int out) {
  Mlp net;
  int prev = in;
  for (int h : hidden) {
    require(h >= 1, "policy: hidden layer sizes must be positive");
    net.layers.push_back({Mat::Zero(h, prev), Vec::Zero(h)});
    prev = h;
  }
  net.layers.push_back({Mat::Zero(out, prev), Vec::Zero(out)});
  return net;
}

void fill_uniform(Mlp& net, std::mt19937_64& rng) {
  for (DenseLayer& l : net.layers) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.W.cols()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = 0; k < l.W.size(); ++k) l.W.data()[k] = u(rng);
    for (Eigen::Index k = 0; k < l.b.size(); ++k) l.b(k) = u(rng);
  }
}

// Activations of every layer for a batch; acts[0] is the input.
struct Trace {
  std::vector<Mat> pre;
  std::vector<Mat> acts;
};

Mat run(const Mlp& net, const Mat& input, Trace* trace) {
  Mat a = input;
  if (trace) trace->acts.push_back(a);
  const std::size_t n = net.layers.size();
  for (std::size_t k = 0; k < n; ++k) {
    const DenseLayer& l = net.layers[k];
    Mat z = l.W * a;
    z.colwise() += l.b;
    if (trace) trace->pre.push_back(z);
    if (k + 1 < n) {
      a = z.cwiseMax(0.0);
      if (trace) trace->acts.push_back(a);
    } else {
      a = std::move(z);
    }
  }
  return a;
}

// Writes the gradient of Σ (dout ⊙ output) into `grad` starting at `offset`.
void backprop(const Mlp& net, const Trace& t, Mat dz, Vec& grad, Eigen::Index offset) {
  std::vector<Eigen::Index> starts;
  Eigen::Index pos = offset;
  for (const DenseLayer& l : net.layers) {
    starts.push_back(pos);
    pos += l.W.size() + l.b.size();
  }
  for (std::size_t k = net.layers.size(); k-- > 0;) {
    const DenseLayer& l = net.layers[k];
    const Mat dW = dz * t.acts[k].transpose();
    grad.segment(starts[k], l.W.size()) = Eigen::Map<const Vec>(dW.data(), dW.size());
    grad.segment(starts[k] + l.W.size(), l.b.size()) = dz.rowwise().sum();
    if (k == 0) break;
    Mat da = l.W.transpose() * dz;
    dz = da.cwiseProduct((t.pre[k - 1].array() > 0.0).cast<double>().matrix());
  }
}

Mat normalize(const PolicyParams& p, const Mat& states) {
  require(states.rows() == p.config.state_size(), "policy: state has wrong length");
  return ((states.colwise() - p.input_shift).array().colwise() * p.input_scale.array()).matrix();
}

}  // namespace

double logistic(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

Eigen::Index Mlp::parameter_count() const {
  Eigen::Index n = 0;
  for (const DenseLayer& l : layers) n += l.W.size() + l.b.size();
  return n;
}

Vec PolicyParams::to_flat() const {
  Vec theta(size());
  Eigen::Index pos = 0;
  for (const Mlp* net : {&mu_net, &sigma_net}) {
    for (const DenseLayer& l : net->layers) {
      theta.segment(pos, l.W.size()) = Eigen::Map<const Vec>(l.W.data(), l.W.size());
      pos += l.W.size();
      theta.segment(pos, l.b.size()) = l.b;
      pos += l.b.size();
    }
  }
  return theta;
}

void PolicyParams::from_flat(const Vec& theta) {
  require(theta.size() == size(), "policy: flat parameter vector has wrong length");
  Eigen::Index pos = 0;
  for (Mlp* net : {&mu_net, &sigma_net}) {
    for (DenseLayer& l : net->layers) {
      Eigen::Map<Vec>(l.W.data(), l.W.size()) = theta.segment(pos, l.W.size());
      pos += l.W.size();
      l.b = theta.segment(pos, l.b.size());
      pos += l.b.size();
    }
  }
}

PolicyParams zero_policy(const PolicyConfig& cfg) {
  require(cfg.num_companies >= 1 && cfg.num_stations >= 1, "policy: invalid market shape");
  require(cfg.price_lo < cfg.price_hi, "policy: price_lo must be below price_hi");
  require(cfg.sigma_min > 0.0, "policy: sigma_min must be positive");
  PolicyParams p;
  p.config = cfg;
  p.mu_net = make_mlp(cfg.state_size(), cfg.hidden, cfg.num_stations);
  p.sigma_net = make_mlp(cfg.state_size(), cfg.hidden, cfg.num_stations);
  p.input_shift = Vec::Zero(cfg.state_size());
  p.input_scale = Vec::Ones(cfg.state_size());
  return p;
}

PolicyParams init_policy(const PolicyConfig& cfg, std::uint64_t seed) {
  PolicyParams p = zero_policy(cfg);
  p.seed = seed;
  std::mt19937_64 rng(seed);
  fill_uniform(p.mu_net, rng);
  fill_uniform(p.sigma_net, rng);
  return p;
}

PolicyOutput forward(const PolicyParams& params, const MarketState& s) {
  const Mat x = normalize(params, s);
  const Vec zm = run(params.mu_net, x, nullptr).col(0);
  const Vec zs = run(params.sigma_net, x, nullptr).col(0);
  const PolicyConfig& c = params.config;
  PolicyOutput out;
  out.mu = zm.unaryExpr([&](double z) { return c.price_lo + (c.price_hi - c.price_lo) * logistic(z); });
  out.sigma = zs.unaryExpr([&](double z) { return softplus(z) + c.sigma_min; });
  return out;
}

PriceVector sample_from(const PolicyOutput& out, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  PriceVector pi(out.mu.size());
  for (Eigen::Index j = 0; j < pi.size(); ++j) pi(j) = out.mu(j) + out.sigma(j) * n01(rng);
  return pi;
}

PriceVector sample(const PolicyParams& params, const MarketState& s, std::mt19937_64& rng) {
  return sample_from(forward(params, s), rng);
}

PriceVector sample(const PolicyParams& params, const MarketState& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return sample(params, s, rng);
}

double log_prob_from(const PolicyOutput& out, const PriceVector& pi) {
  require(pi.size() == out.mu.size(), "log_prob: price vector has wrong length");
  const Vec u = (pi - out.mu).cwiseQuotient(out.sigma);
  return -out.sigma.array().log().sum() - 0.5 * u.squaredNorm() -
         0.5 * static_cast<double>(pi.size()) * kLog2Pi;
}

double log_prob(const PolicyParams& params, const MarketState& s, const PriceVector& pi) {
  return log_prob_from(forward(params, s), pi);
}

double weighted_log_likelihood(const PolicyParams& params, const Mat& states, const Mat& prices,
                               const Vec& weights, Vec* grad) {
  const PolicyConfig& c = params.config;
  require(states.cols() == prices.cols() && prices.cols() == weights.size(),
          "policy: batch sizes disagree");
  require(prices.rows() == c.num_stations, "policy: price vector has wrong length");
  const Mat x = normalize(params, states);
  Trace tm, ts;
  const Mat zm = run(params.mu_net, x, grad ? &tm : nullptr);
  const Mat zs = run(params.sigma_net, x, grad ? &ts : nullptr);
  const double span = c.price_hi - c.price_lo;
  const Mat sig = zm.unaryExpr([](double z) { return logistic(z); });
  const Mat mu = (c.price_lo + span * sig.array()).matrix();
  const Mat sd = (zs.unaryExpr([](double z) { return softplus(z); }).array() + c.sigma_min).matrix();
  const Mat diff = prices - mu;

  double total = 0.0;
  for (Eigen::Index b = 0; b < weights.size(); ++b) {
    const double lp = -sd.col(b).array().log().sum() -
                      0.5 * diff.col(b).cwiseQuotient(sd.col(b)).squaredNorm() -
                      0.5 * static_cast<double>(c.num_stations) * kLog2Pi;
    total += weights(b) * lp;
  }
  if (!grad) return total;

  // ∂/∂μ = (π − μ)/σ², ∂/∂σ = −1/σ + (π − μ)²/σ³, chained through the heads.
  const Mat inv_var = sd.array().square().inverse().matrix();
  Mat dzm = diff.cwiseProduct(inv_var).cwiseProduct((span * sig.array() * (1.0 - sig.array())).matrix());
  Mat dsd = (-(sd.array().inverse()) + diff.array().square() / sd.array().cube()).matrix();
  Mat dzs = dsd.cwiseProduct(zs.unaryExpr([](double z) { return logistic(z); }));
  dzm = dzm * weights.asDiagonal();
  dzs = dzs * weights.asDiagonal();

  grad->setZero(params.size());
  backprop(params.mu_net, tm, dzm, *grad, 0);
  backprop(params.sigma_net, ts, dzs, *grad, params.mu_net.parameter_count());
  return total;
}

Vec grad_log_prob(const PolicyParams& params, const MarketState& s, const PriceVector& pi) {
  Vec g;
  weighted_log_likelihood(params, s, pi, Vec::Ones(1), &g);
  return g;
}

}  // namespace stackprice
