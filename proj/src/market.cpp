#include "minesched/market.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "minesched/common.hpp"

namespace minesched {

using json = nlohmann::ordered_json;

namespace {

void check_common(double s0, double sigma, double jump_freq, int n_periods, int n_paths) {
    if (!(s0 > 0.0)) throw std::invalid_argument("price params: s0 must be > 0");
    if (!(sigma >= 0.0)) throw std::invalid_argument("price params: sigma must be >= 0");
    if (!(jump_freq >= 0.0)) throw std::invalid_argument("price params: jump_freq must be >= 0");
    if (n_periods < 1) throw std::invalid_argument("simulate: n_periods must be >= 1");
    if (n_paths < 1) throw std::invalid_argument("simulate: n_paths must be >= 1");
}

// One period's random increments: Gaussian W, Poisson count P, jump sign J.
// Zero-parameter cases skip the draw (the distributions require positive
// parameters) and leave the stream untouched, which keeps paths with e.g.
// jumps disabled comparable across sigma settings.
struct PeriodDraw {
    double w = 0.0;
    int p = 0;
    double j = 1.0;
};

PeriodDraw draw_period(Rng& rng, double sigma, double jump_freq) {
    PeriodDraw d;
    if (sigma > 0.0) d.w = std::normal_distribution<double>(0.0, sigma)(rng);
    if (jump_freq > 0.0) {
        d.p = std::poisson_distribution<int>(jump_freq)(rng);
        if (d.p > 0) d.j = uniform01(rng) < 0.5 ? -1.0 : 1.0;
    }
    return d;
}

}  // namespace

PricePathSet simulate_mrj(const MrjParams& params, int n_periods, int n_paths, uint64_t seed) {
    check_common(params.s0, params.sigma, params.jump_freq, n_periods, n_paths);
    if (!(params.s_bar > 0.0)) throw std::invalid_argument("MrjParams: s_bar must be > 0");
    if (!(params.alpha >= 0.0 && params.alpha <= 1.0))
        throw std::invalid_argument("MrjParams: alpha must be in [0,1]");

    PricePathSet set;
    set.n_paths = n_paths;
    set.n_periods = n_periods;
    set.model_tag = "mrj";
    set.seed = seed;
    set.price_floor = 1e-6 * params.s0;
    set.prices.resize(static_cast<size_t>(n_paths) * static_cast<size_t>(n_periods));
    for (int p = 0; p < n_paths; ++p) {
        auto rng = make_rng(seed, static_cast<uint64_t>(p));
        double s = params.s0;
        for (int t = 0; t < n_periods; ++t) {
            const auto d = draw_period(rng, params.sigma, params.jump_freq);
            s = s + params.alpha * (params.s_bar - s) + d.w * s + params.jump_size * d.p * d.j * s;
            s = std::max(s, set.price_floor);
            set.prices[static_cast<size_t>(p) * static_cast<size_t>(n_periods) +
                       static_cast<size_t>(t)] = s;
        }
    }
    return set;
}

PricePathSet simulate_gbmj(const GbmjParams& params, int n_periods, int n_paths, uint64_t seed) {
    check_common(params.s0, params.sigma, params.jump_freq, n_periods, n_paths);

    PricePathSet set;
    set.n_paths = n_paths;
    set.n_periods = n_periods;
    set.model_tag = "gbmj";
    set.seed = seed;
    set.prices.resize(static_cast<size_t>(n_paths) * static_cast<size_t>(n_periods));
    const double drift = params.eta - 0.5 * params.sigma * params.sigma;
    for (int p = 0; p < n_paths; ++p) {
        auto rng = make_rng(seed, static_cast<uint64_t>(p));
        double s = params.s0;
        for (int t = 0; t < n_periods; ++t) {
            const auto d = draw_period(rng, params.sigma, params.jump_freq);
            s = s * std::exp(drift + d.w + params.jump_size * d.p * d.j);
            set.prices[static_cast<size_t>(p) * static_cast<size_t>(n_periods) +
                       static_cast<size_t>(t)] = s;
        }
    }
    return set;
}

std::vector<double> path_quantiles(const PricePathSet& set, int t, std::span<const double> q) {
    if (set.n_paths < 1) throw std::invalid_argument("path_quantiles: empty path set");
    if (t < 0 || t >= set.n_periods) throw std::out_of_range("path_quantiles: period out of range");
    std::vector<double> column(static_cast<size_t>(set.n_paths));
    for (int p = 0; p < set.n_paths; ++p) column[static_cast<size_t>(p)] = set.at(p, t);
    return quantiles(std::move(column), q);
}

std::vector<double> mean_path(const PricePathSet& set) {
    if (set.n_paths < 1) throw std::invalid_argument("mean_path: empty path set");
    std::vector<double> out(static_cast<size_t>(set.n_periods), 0.0);
    for (int p = 0; p < set.n_paths; ++p)
        for (int t = 0; t < set.n_periods; ++t) out[static_cast<size_t>(t)] += set.at(p, t);
    for (auto& v : out) v /= set.n_paths;
    return out;
}

std::string save_paths_json(const PricePathSet& set) {
    json j;
    j["format"] = "minesched.prices";
    j["version"] = 1;
    j["model_tag"] = set.model_tag;
    j["seed"] = set.seed;
    j["n_paths"] = set.n_paths;
    j["n_periods"] = set.n_periods;
    j["price_floor"] = set.price_floor;
    json rows = json::array();
    for (int p = 0; p < set.n_paths; ++p) {
        json row = json::array();
        for (int t = 0; t < set.n_periods; ++t) row.push_back(set.at(p, t));
        rows.push_back(std::move(row));
    }
    j["paths"] = std::move(rows);
    return j.dump();
}

PricePathSet load_paths_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("format") != "minesched.prices")
        throw std::runtime_error("load_paths_json: wrong format tag");
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("load_paths_json: unsupported version");
    PricePathSet set;
    set.model_tag = j.at("model_tag");
    set.seed = j.at("seed");
    set.n_paths = j.at("n_paths");
    set.n_periods = j.at("n_periods");
    set.price_floor = j.at("price_floor");
    set.prices.reserve(static_cast<size_t>(set.n_paths) * static_cast<size_t>(set.n_periods));
    for (const auto& row : j.at("paths"))
        for (const auto& v : row) set.prices.push_back(v.get<double>());
    if (set.prices.size() != static_cast<size_t>(set.n_paths) * static_cast<size_t>(set.n_periods))
        throw std::runtime_error("load_paths_json: path matrix shape mismatch");
    return set;
}

std::string paths_csv(const PricePathSet& set) {
    std::ostringstream out;
    out << "path,period,price\n";
    out.precision(17);
    for (int p = 0; p < set.n_paths; ++p)
        for (int t = 0; t < set.n_periods; ++t)
            out << p << ',' << t << ',' << set.at(p, t) << '\n';
    return out.str();
}

}  // namespace minesched
