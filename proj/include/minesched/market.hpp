#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace minesched {

/// Mean-reverting process with Poisson jumps (additive update):
/// S_t = S_{t-1} + alpha*(s_bar - S_{t-1}) + W*S_{t-1} + jump_size*P*J*S_{t-1}
/// with W ~ N(0, sigma), P ~ Poisson(jump_freq), J = +-1 equiprobable per period.
struct MrjParams {
    double s0 = 2.78;        // currency/unit
    double s_bar = 2.78;     // reversion level
    double alpha = 0.5;      // mean-reverting speed, in [0,1]
    double sigma = 0.09;     // annual volatility
    double jump_freq = 1.0;  // expected jumps per period (mu_p)
    double jump_size = 0.03; // relative size per jump (beta)
};

/// Trending GBM with Poisson jumps (multiplicative update):
/// S_t = S_{t-1} * exp(eta - sigma^2/2 + W + jump_size*P*J)
struct GbmjParams {
    double s0 = 1548.6;
    double eta = 0.001;       // annual drift
    double sigma = 0.05;      // annual volatility
    double jump_freq = 1.0;   // mu_p
    double jump_size = 0.005; // beta
};

struct PricePathSet {
    int n_paths = 0;
    int n_periods = 0;
    std::vector<double> prices; // row-major [n_paths x n_periods]; entry t is S_{t+1}
    std::string model_tag;      // "mrj" or "gbmj"
    uint64_t seed = 0;
    double price_floor = 0.0;   // additive model only; 0 when not applicable

    double at(int path, int t) const {
        return prices[static_cast<size_t>(path) * static_cast<size_t>(n_periods) +
                      static_cast<size_t>(t)];
    }
};

PricePathSet simulate_mrj(const MrjParams& params, int n_periods, int n_paths, uint64_t seed);
PricePathSet simulate_gbmj(const GbmjParams& params, int n_periods, int n_paths, uint64_t seed);

/// Empirical quantiles of the per-path prices at period t (linear interpolation).
std::vector<double> path_quantiles(const PricePathSet& set, int t, std::span<const double> q);

/// Per-period mean over paths; the deterministic price curve the optimizer sees.
std::vector<double> mean_path(const PricePathSet& set);

std::string save_paths_json(const PricePathSet& set);
PricePathSet load_paths_json(const std::string& text);

/// CSV with header "path,period,price", one row per (path, period).
std::string paths_csv(const PricePathSet& set);

}  // namespace minesched
