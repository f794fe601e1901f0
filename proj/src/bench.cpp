#include "minesched/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "minesched/fdcheck.hpp"
#include "minesched/perturb.hpp"

namespace minesched::bench {

using ordered_json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// enum text

std::string slope_to_string(SlopePattern p) {
    return p == SlopePattern::one_point ? "one_point" : "five_point";
}

SlopePattern slope_from_string(const std::string& s) {
    if (s == "one_point") return SlopePattern::one_point;
    if (s == "five_point") return SlopePattern::five_point;
    throw std::invalid_argument("config: unknown slope pattern '" + s + "'");
}

std::string node_kind_to_string(NodeKind k) {
    switch (k) {
        case NodeKind::mine: return "mine";
        case NodeKind::stockpile: return "stockpile";
        case NodeKind::processor: return "processor";
        case NodeKind::market_sink: return "market_sink";
    }
    throw std::logic_error("node_kind_to_string: bad enum");
}

NodeKind node_kind_from_string(const std::string& s) {
    if (s == "mine") return NodeKind::mine;
    if (s == "stockpile") return NodeKind::stockpile;
    if (s == "processor") return NodeKind::processor;
    if (s == "market_sink") return NodeKind::market_sink;
    throw std::invalid_argument("config: unknown node kind '" + s + "'");
}

// ---------------------------------------------------------------------------
// JSON helpers: every getter type-checks so malformed configs become
// invalid_argument instead of nlohmann's type_error.

const ordered_json& need(const ordered_json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end())
        throw std::invalid_argument(std::string("config: missing field '") + key + "'");
    return *it;
}

double need_num(const ordered_json& j, const char* key) {
    const auto& v = need(j, key);
    if (!v.is_number()) throw std::invalid_argument(std::string("config: '") + key + "' must be a number");
    return v.get<double>();
}

int64_t need_int(const ordered_json& j, const char* key) {
    const auto& v = need(j, key);
    if (!v.is_number_integer())
        throw std::invalid_argument(std::string("config: '") + key + "' must be an integer");
    return v.get<int64_t>();
}

uint64_t need_uint(const ordered_json& j, const char* key) {
    const auto& v = need(j, key);
    if (!v.is_number_unsigned() && !v.is_number_integer())
        throw std::invalid_argument(std::string("config: '") + key + "' must be an integer");
    return v.get<uint64_t>();
}

std::string need_str(const ordered_json& j, const char* key) {
    const auto& v = need(j, key);
    if (!v.is_string()) throw std::invalid_argument(std::string("config: '") + key + "' must be a string");
    return v.get<std::string>();
}

bool need_bool(const ordered_json& j, const char* key) {
    const auto& v = need(j, key);
    if (!v.is_boolean()) throw std::invalid_argument(std::string("config: '") + key + "' must be a boolean");
    return v.get<bool>();
}

std::vector<int> need_int_vec(const ordered_json& j, const char* key) {
    const auto& v = need(j, key);
    if (!v.is_array()) throw std::invalid_argument(std::string("config: '") + key + "' must be an array");
    std::vector<int> out;
    for (const auto& e : v) {
        if (!e.is_number_integer())
            throw std::invalid_argument(std::string("config: '") + key + "' entries must be integers");
        out.push_back(e.get<int>());
    }
    return out;
}

// ---------------------------------------------------------------------------
// config <-> json

ordered_json supply_to_json(const SupplyScenarioSpec& s) {
    return ordered_json{{"n_scenarios", s.n_scenarios},
                        {"mean_grade", s.mean_grade},
                        {"variance", s.variance},
                        {"correlation_range", s.correlation_range},
                        {"ore_threshold", s.ore_threshold},
                        {"seed", s.seed}};
}

SupplyScenarioSpec supply_from_json(const ordered_json& j) {
    SupplyScenarioSpec s;
    s.n_scenarios = static_cast<int>(need_int(j, "n_scenarios"));
    s.mean_grade = need_num(j, "mean_grade");
    s.variance = need_num(j, "variance");
    s.correlation_range = need_num(j, "correlation_range");
    s.ore_threshold = need_num(j, "ore_threshold");
    s.seed = need_uint(j, "seed");
    return s;
}

ordered_json instance_to_json(const InstanceSpec& i) {
    return ordered_json{{"dims", {i.dims[0], i.dims[1], i.dims[2]}},
                        {"block_tonnage", i.block_tonnage},
                        {"supply", supply_to_json(i.supply)},
                        {"slope", slope_to_string(i.slope)}};
}

InstanceSpec instance_from_json(const ordered_json& j) {
    InstanceSpec i;
    const auto& d = need(j, "dims");
    if (!d.is_array() || d.size() != 3)
        throw std::invalid_argument("config: 'dims' must be a 3-array");
    for (int k = 0; k < 3; ++k) i.dims[static_cast<size_t>(k)] = d[static_cast<size_t>(k)].get<int>();
    i.block_tonnage = need_num(j, "block_tonnage");
    i.supply = supply_from_json(need(j, "supply"));
    i.slope = slope_from_string(need_str(j, "slope"));
    return i;
}

ordered_json price_to_json(const PriceSpec& p) {
    return ordered_json{
        {"model", p.model},
        {"mrj",
         {{"s0", p.mrj.s0},
          {"s_bar", p.mrj.s_bar},
          {"alpha", p.mrj.alpha},
          {"sigma", p.mrj.sigma},
          {"jump_freq", p.mrj.jump_freq},
          {"jump_size", p.mrj.jump_size}}},
        {"gbmj",
         {{"s0", p.gbmj.s0},
          {"eta", p.gbmj.eta},
          {"sigma", p.gbmj.sigma},
          {"jump_freq", p.gbmj.jump_freq},
          {"jump_size", p.gbmj.jump_size}}},
        {"n_paths", p.n_paths},
        {"seed", p.seed}};
}

PriceSpec price_from_json(const ordered_json& j) {
    PriceSpec p;
    p.model = need_str(j, "model");
    if (p.model != "mrj" && p.model != "gbmj")
        throw std::invalid_argument("config: price model must be 'mrj' or 'gbmj'");
    const auto& m = need(j, "mrj");
    p.mrj.s0 = need_num(m, "s0");
    p.mrj.s_bar = need_num(m, "s_bar");
    p.mrj.alpha = need_num(m, "alpha");
    p.mrj.sigma = need_num(m, "sigma");
    p.mrj.jump_freq = need_num(m, "jump_freq");
    p.mrj.jump_size = need_num(m, "jump_size");
    const auto& g = need(j, "gbmj");
    p.gbmj.s0 = need_num(g, "s0");
    p.gbmj.eta = need_num(g, "eta");
    p.gbmj.sigma = need_num(g, "sigma");
    p.gbmj.jump_freq = need_num(g, "jump_freq");
    p.gbmj.jump_size = need_num(g, "jump_size");
    p.n_paths = static_cast<int>(need_int(j, "n_paths"));
    p.seed = need_uint(j, "seed");
    return p;
}

ordered_json nodes_to_json(const std::vector<FlowNode>& nodes) {
    ordered_json arr = ordered_json::array();
    for (const auto& n : nodes)
        arr.push_back(ordered_json{{"id", n.id},
                                   {"kind", node_kind_to_string(n.kind)},
                                   {"capacity_per_period", n.capacity_per_period},
                                   {"capacity_enforced", n.capacity_enforced},
                                   {"target_lower", n.target_lower},
                                   {"recovery", n.recovery},
                                   {"processing_cost", n.processing_cost},
                                   {"price_factor", n.price_factor}});
    return arr;
}

std::vector<FlowNode> nodes_from_json(const ordered_json& arr) {
    if (!arr.is_array() || arr.empty())
        throw std::invalid_argument("config: 'nodes' must be a nonempty array");
    std::vector<FlowNode> nodes;
    for (const auto& j : arr) {
        FlowNode n;
        n.id = need_str(j, "id");
        n.kind = node_kind_from_string(need_str(j, "kind"));
        n.capacity_per_period = need_num(j, "capacity_per_period");
        n.capacity_enforced = need_bool(j, "capacity_enforced");
        n.target_lower = need_num(j, "target_lower");
        n.recovery = need_num(j, "recovery");
        n.processing_cost = need_num(j, "processing_cost");
        n.price_factor = need_num(j, "price_factor");
        nodes.push_back(std::move(n));
    }
    return nodes;
}

ordered_json schedule_to_json(const AnnealSchedule& s) {
    return ordered_json{{"temp0", s.temp0},
                        {"cooling", s.cooling},
                        {"epoch_len", s.epoch_len},
                        {"max_iters", s.max_iters},
                        {"stream_step_sigma", s.stream_step_sigma},
                        {"trace_keep_every", s.trace_keep_every}};
}

AnnealSchedule schedule_from_json(const ordered_json& j) {
    AnnealSchedule s;
    s.temp0 = need_num(j, "temp0");
    s.cooling = need_num(j, "cooling");
    s.epoch_len = static_cast<int>(need_int(j, "epoch_len"));
    s.max_iters = need_int(j, "max_iters");
    s.stream_step_sigma = need_num(j, "stream_step_sigma");
    s.trace_keep_every = need_int(j, "trace_keep_every");
    return s;
}

ordered_json guide_to_json(const guide::GuideConfig& g) {
    return ordered_json{{"n_heuristics", g.n_heuristics},
                        {"window", g.window},
                        {"hidden", g.hidden},
                        {"lr", g.lr},
                        {"discount", g.discount},
                        {"target_sync_every", g.target_sync_every},
                        {"replay_capacity", g.replay_capacity},
                        {"batch_size", g.batch_size},
                        {"priority_eps", g.priority_eps},
                        {"sigma_start", g.sigma_start},
                        {"sigma_end", g.sigma_end},
                        {"sigma_horizon", g.sigma_horizon},
                        {"train_every", g.train_every}};
}

guide::GuideConfig guide_from_json(const ordered_json& j) {
    guide::GuideConfig g;
    g.n_heuristics = static_cast<int>(need_int(j, "n_heuristics"));
    g.window = static_cast<int>(need_int(j, "window"));
    g.hidden = need_int_vec(j, "hidden");
    g.lr = need_num(j, "lr");
    g.discount = need_num(j, "discount");
    g.target_sync_every = static_cast<int>(need_int(j, "target_sync_every"));
    g.replay_capacity = static_cast<int>(need_int(j, "replay_capacity"));
    g.batch_size = static_cast<int>(need_int(j, "batch_size"));
    g.priority_eps = need_num(j, "priority_eps");
    g.sigma_start = need_num(j, "sigma_start");
    g.sigma_end = need_num(j, "sigma_end");
    g.sigma_horizon = need_int(j, "sigma_horizon");
    g.train_every = static_cast<int>(need_int(j, "train_every"));
    return g;
}

ordered_json branch_to_json(const branch::BranchConfig& b) {
    return ordered_json{{"lr", b.lr},
                        {"clip_eps", b.clip_eps},
                        {"entropy_bonus", b.entropy_bonus},
                        {"refresh_interval", b.refresh_interval},
                        {"kernel_std", b.kernel_std},
                        {"kernel_radius", b.kernel_radius},
                        {"conv_channels", b.conv_channels},
                        {"gnn_width", b.gnn_width},
                        {"gnn_rounds", b.gnn_rounds},
                        {"nn_hidden", b.nn_hidden}};
}

branch::BranchConfig branch_from_json(const ordered_json& j) {
    branch::BranchConfig b;
    b.lr = need_num(j, "lr");
    b.clip_eps = need_num(j, "clip_eps");
    b.entropy_bonus = need_num(j, "entropy_bonus");
    b.refresh_interval = static_cast<int>(need_int(j, "refresh_interval"));
    b.kernel_std = need_num(j, "kernel_std");
    b.kernel_radius = need_num(j, "kernel_radius");
    b.conv_channels = static_cast<int>(need_int(j, "conv_channels"));
    b.gnn_width = static_cast<int>(need_int(j, "gnn_width"));
    b.gnn_rounds = static_cast<int>(need_int(j, "gnn_rounds"));
    b.nn_hidden = need_int_vec(j, "nn_hidden");
    return b;
}

ordered_json config_to_json(const ExperimentConfig& cfg) {
    ordered_json arcs = ordered_json::array();
    for (const auto& [from, to] : cfg.arcs) arcs.push_back({from, to});
    return ordered_json{{"format", "minesched.config"},
                        {"schema_version", cfg.schema_version},
                        {"name", cfg.name},
                        {"instance", instance_to_json(cfg.instance)},
                        {"price", price_to_json(cfg.price)},
                        {"flowsheet",
                         {{"n_periods", cfg.n_periods},
                          {"n_bins", cfg.n_bins},
                          {"nodes", nodes_to_json(cfg.nodes)},
                          {"arcs", arcs}}},
                        {"economics",
                         {{"discount_rate", cfg.econ.discount_rate},
                          {"mining_cost", cfg.econ.mining_cost},
                          {"penalty_up", cfg.econ.penalty_up},
                          {"penalty_down", cfg.econ.penalty_down},
                          {"unit_conversion", cfg.econ.unit_conversion}}},
                        {"anneal", schedule_to_json(cfg.schedule)},
                        {"guide", guide_to_json(cfg.guide_cfg)},
                        {"branch", branch_to_json(cfg.branch_cfg)},
                        {"policy", cfg.policy},
                        {"use_guide", cfg.use_guide},
                        {"budget_seconds", cfg.budget_seconds},
                        {"solve_seed", cfg.solve_seed},
                        {"out_dir", cfg.out_dir},
                        {"instance_hash", cfg.instance_hash},
                        {"prices_hash", cfg.prices_hash}};
}

ExperimentConfig config_from_json(const ordered_json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    if (need_str(j, "format") != "minesched.config")
        throw std::invalid_argument("config: unrecognized format tag");
    ExperimentConfig cfg;
    cfg.schema_version = static_cast<int>(need_int(j, "schema_version"));
    if (cfg.schema_version != kConfigSchema)
        throw std::invalid_argument("config: unsupported schema_version " +
                                    std::to_string(cfg.schema_version));
    cfg.name = need_str(j, "name");
    cfg.instance = instance_from_json(need(j, "instance"));
    cfg.price = price_from_json(need(j, "price"));

    const auto& fsj = need(j, "flowsheet");
    cfg.n_periods = static_cast<int>(need_int(fsj, "n_periods"));
    cfg.n_bins = static_cast<int>(need_int(fsj, "n_bins"));
    cfg.nodes = nodes_from_json(need(fsj, "nodes"));
    const auto& arcs = need(fsj, "arcs");
    if (!arcs.is_array()) throw std::invalid_argument("config: 'arcs' must be an array");
    for (const auto& a : arcs) {
        if (!a.is_array() || a.size() != 2)
            throw std::invalid_argument("config: each arc must be a [from, to] pair");
        cfg.arcs.emplace_back(a[0].get<std::string>(), a[1].get<std::string>());
    }

    const auto& e = need(j, "economics");
    cfg.econ.discount_rate = need_num(e, "discount_rate");
    cfg.econ.mining_cost = need_num(e, "mining_cost");
    cfg.econ.penalty_up = need_num(e, "penalty_up");
    cfg.econ.penalty_down = need_num(e, "penalty_down");
    cfg.econ.unit_conversion = need_num(e, "unit_conversion");

    cfg.schedule = schedule_from_json(need(j, "anneal"));
    cfg.guide_cfg = guide_from_json(need(j, "guide"));
    cfg.branch_cfg = branch_from_json(need(j, "branch"));

    cfg.policy = need_str(j, "policy");
    branch::policy_kind_from_string(cfg.policy);  // validates the spelling
    cfg.use_guide = need_bool(j, "use_guide");
    cfg.budget_seconds = need_num(j, "budget_seconds");
    cfg.solve_seed = need_uint(j, "solve_seed");
    cfg.out_dir = need_str(j, "out_dir");
    cfg.instance_hash = need_str(j, "instance_hash");
    cfg.prices_hash = need_str(j, "prices_hash");

    if (cfg.instance.dims[0] < 1 || cfg.instance.dims[1] < 1 || cfg.instance.dims[2] < 1)
        throw std::invalid_argument("config: dims must be positive");
    if (cfg.instance.supply.n_scenarios < 1)
        throw std::invalid_argument("config: n_scenarios must be >= 1");
    if (cfg.price.n_paths < 1) throw std::invalid_argument("config: n_paths must be >= 1");
    if (cfg.n_periods < 1) throw std::invalid_argument("config: n_periods must be >= 1");
    if (cfg.guide_cfg.n_heuristics != 3)
        throw std::invalid_argument("config: guide n_heuristics must be 3");
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    if (dir.empty()) return name;
    return dir.back() == '/' ? dir + name : dir + "/" + name;
}

PricePathSet simulate_prices(const ExperimentConfig& cfg) {
    if (cfg.price.model == "mrj")
        return simulate_mrj(cfg.price.mrj, cfg.n_periods, cfg.price.n_paths, cfg.price.seed);
    return simulate_gbmj(cfg.price.gbmj, cfg.n_periods, cfg.price.n_paths, cfg.price.seed);
}

}  // namespace

// ---------------------------------------------------------------------------
// presets

ExperimentConfig desk_config() {
    ExperimentConfig cfg;
    cfg.name = "desk-copper";
    cfg.instance.dims = {12, 12, 6};
    cfg.instance.block_tonnage = 10000.0;
    cfg.instance.supply.n_scenarios = 10;
    cfg.instance.supply.mean_grade = 0.5;
    cfg.instance.supply.variance = 0.04;
    cfg.instance.supply.correlation_range = 3.0;
    cfg.instance.supply.ore_threshold = 0.3;
    cfg.instance.supply.seed = 11;
    cfg.price.model = "mrj";
    cfg.price.n_paths = 50;
    cfg.price.seed = 21;

    cfg.n_periods = 8;
    cfg.n_bins = 5;
    // mine -> {mill, stockpile, dump}; stockpile -> mill; mill -> product.
    // 864 blocks x 10 kt over 8 periods is 1.08 Mt/period of rock; the mill
    // takes roughly half of that, so sequencing and stockpiling matter.
    const double rock_per_period = 864.0 * 10000.0 / 8.0;
    FlowNode mine{"mine", NodeKind::mine, 1.25 * rock_per_period, true, 0.0, 1.0, 0.0, 1.0};
    FlowNode stock{"stockpile", NodeKind::stockpile, 0.30 * rock_per_period, true, 0.0, 1.0, 0.5, 1.0};
    FlowNode mill{"mill", NodeKind::processor, 0.55 * rock_per_period, true, 0.0, 0.90, 10.0, 1.0};
    FlowNode product{"product", NodeKind::market_sink, 0.0, false, 0.0, 1.0, 0.0, 1.0};
    FlowNode dump{"dump", NodeKind::market_sink, 0.0, false, 0.0, 1.0, 0.0, 0.0};
    cfg.nodes = {mine, stock, mill, product, dump};
    cfg.arcs = {{"mine", "mill"},
                {"mine", "stockpile"},
                {"mine", "dump"},
                {"stockpile", "mill"},
                {"mill", "product"}};

    cfg.econ.discount_rate = 0.10;
    cfg.econ.mining_cost = 2.0;
    // per-tonne ore value at mean grade is ~2.8k (grade x recovery x price x
    // conversion); the deviation penalty must beat it or capacities are noise
    cfg.econ.penalty_up = 5000.0;
    cfg.econ.penalty_down = 0.0;
    cfg.econ.unit_conversion = 2204.62;  // price per lb -> value per tonne of metal

    cfg.schedule.temp0 = 0.0;  // auto-calibrate at solve time
    cfg.schedule.cooling = 0.995;
    cfg.schedule.epoch_len = 500;
    cfg.schedule.max_iters = -1;
    cfg.schedule.stream_step_sigma = 0.1;
    cfg.schedule.trace_keep_every = 1000;

    // scoring three heuristics needs a small net and an occasional train step;
    // the library's replay cadence is sized for toy bandit runs and would put
    // the DQN batch on the critical path here
    cfg.guide_cfg.hidden = {32, 32};
    cfg.guide_cfg.train_every = 128;
    // the sampling distribution drifts slowly (one block's features move per
    // accepted extraction shift), so policy forwards amortize over many more
    // proposals than the library default without hurting learning
    cfg.branch_cfg.refresh_interval = 512;
    // two hops of spatial context are plenty at this grid size, and the
    // narrower net keeps the per-epoch training step off the critical path
    cfg.branch_cfg.gnn_width = 16;
    cfg.branch_cfg.gnn_rounds = 2;

    cfg.policy = "baseline";
    // stock benchmark isolates the block-sampling policy: both arms keep the
    // uniform heuristic selector so runs differ only in where they perturb
    cfg.use_guide = false;
    cfg.budget_seconds = 60.0;
    cfg.solve_seed = 1;
    cfg.out_dir = "out";
    return cfg;
}

ExperimentConfig copper_preset() { return desk_config(); }

ExperimentConfig gold_preset() {
    ExperimentConfig cfg = desk_config();
    cfg.name = "desk-gold";
    cfg.price.model = "gbmj";
    // gold grades run in ounces on far smaller per-tonne contents; keep the
    // synthetic grade field and switch the value basis to per-ounce pricing
    cfg.econ.unit_conversion = 32.1507;  // price per oz -> value per tonne at g/t-scale grades
    cfg.econ.mining_cost = 2.0;
    return cfg;
}

std::string save_config_json(const ExperimentConfig& cfg) { return config_to_json(cfg).dump(2) + "\n"; }

ExperimentConfig load_config_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("config: JSON parse error: ") + e.what());
    }
    return config_from_json(j);
}

Flowsheet build_flowsheet(const ExperimentConfig& cfg) {
    std::vector<std::pair<int, int>> arcs;
    auto index_of = [&](const std::string& id) {
        for (size_t i = 0; i < cfg.nodes.size(); ++i)
            if (cfg.nodes[i].id == id) return static_cast<int>(i);
        throw std::invalid_argument("config: arc references unknown node '" + id + "'");
    };
    for (const auto& [from, to] : cfg.arcs) arcs.emplace_back(index_of(from), index_of(to));
    return Flowsheet(cfg.nodes, arcs, cfg.n_periods, cfg.n_bins);
}

// ---------------------------------------------------------------------------
// generate

GenerateResult cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir, bool force) {
    std::filesystem::create_directories(out_dir);
    GenerateResult res;
    res.config_path = join(out_dir, "config.json");
    res.instance_path = join(out_dir, "instance.json");
    res.prices_path = join(out_dir, "prices.json");

    if (!force)
        for (const auto& p : {res.config_path, res.instance_path, res.prices_path})
            if (file_exists(p))
                throw std::runtime_error("generate: '" + p + "' exists (pass --force to overwrite)");

    const BlockModel model = generate_block_model(cfg.instance.dims, cfg.instance.supply,
                                                  cfg.instance.slope, cfg.instance.block_tonnage);
    const PricePathSet prices = simulate_prices(cfg);
    build_flowsheet(cfg);  // topology errors surface at generate time

    write_file(res.instance_path, save_instance_json(model));
    write_file(res.prices_path, save_paths_json(prices));
    res.instance_hash = hex64(file_hash(res.instance_path));
    res.prices_hash = hex64(file_hash(res.prices_path));

    ExperimentConfig echo = cfg;
    echo.out_dir = out_dir;
    echo.instance_hash = res.instance_hash;
    echo.prices_hash = res.prices_hash;
    write_file(res.config_path, save_config_json(echo));
    return res;
}

// ---------------------------------------------------------------------------
// reports

std::vector<double> suboptimality(const std::vector<SeriesPoint>& series, double reference) {
    const double denom = std::abs(reference) > 0.0 ? std::abs(reference) : 1.0;
    std::vector<double> out;
    out.reserve(series.size());
    for (const auto& p : series) out.push_back((reference - p.best) / denom);
    return out;
}

std::string save_report_json(const RunReport& r) {
    ordered_json series{{"iter", ordered_json::array()},
                        {"best", ordered_json::array()},
                        {"subopt", ordered_json::array()},
                        {"wall", ordered_json::array()}};
    const std::vector<double> sub = suboptimality(r.series, r.best_objective);
    for (size_t i = 0; i < r.series.size(); ++i) {
        series["iter"].push_back(r.series[i].iter);
        series["best"].push_back(r.series[i].best);
        series["subopt"].push_back(sub[i]);
        series["wall"].push_back(r.series[i].wall);
    }
    ordered_json j{{"format", "minesched.report"},
                   {"schema_version", r.schema_version},
                   {"lib_version", r.lib_version},
                   {"policy", r.policy},
                   {"seed", r.seed},
                   {"budget_seconds", r.budget_seconds},
                   {"iters", r.iters},
                   {"wall_seconds", r.wall_seconds},
                   {"best_objective", r.best_objective},
                   {"revenue_term", r.revenue_term},
                   {"penalty_term", r.penalty_term},
                   {"npv_quantiles",
                    {{"p10", r.npv_quantiles.size() > 0 ? r.npv_quantiles[0] : 0.0},
                     {"p50", r.npv_quantiles.size() > 1 ? r.npv_quantiles[1] : 0.0},
                     {"p90", r.npv_quantiles.size() > 2 ? r.npv_quantiles[2] : 0.0}}},
                   {"series", series},
                   {"instance_hash", r.instance_hash},
                   {"prices_hash", r.prices_hash},
                   {"config", r.config_json.empty() ? ordered_json::object()
                                                    : ordered_json::parse(r.config_json)}};
    return j.dump(2) + "\n";
}

RunReport load_report_json(const std::string& text) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const std::exception& e) {
        throw std::invalid_argument(std::string("report: JSON parse error: ") + e.what());
    }
    if (!j.is_object() || need_str(j, "format") != "minesched.report")
        throw std::invalid_argument("report: unrecognized format tag");
    RunReport r;
    r.schema_version = static_cast<int>(need_int(j, "schema_version"));
    if (r.schema_version != kReportSchema)
        throw std::invalid_argument("report: unsupported schema_version");
    r.lib_version = need_str(j, "lib_version");
    r.policy = need_str(j, "policy");
    r.seed = need_uint(j, "seed");
    r.budget_seconds = need_num(j, "budget_seconds");
    r.iters = need_int(j, "iters");
    r.wall_seconds = need_num(j, "wall_seconds");
    r.best_objective = need_num(j, "best_objective");
    r.revenue_term = need_num(j, "revenue_term");
    r.penalty_term = need_num(j, "penalty_term");
    const auto& q = need(j, "npv_quantiles");
    r.npv_quantiles = {need_num(q, "p10"), need_num(q, "p50"), need_num(q, "p90")};
    const auto& s = need(j, "series");
    const auto& iters = need(s, "iter");
    const auto& best = need(s, "best");
    const auto& wall = need(s, "wall");
    if (!iters.is_array() || iters.size() != best.size() || iters.size() != wall.size())
        throw std::invalid_argument("report: series arrays must align");
    for (size_t i = 0; i < iters.size(); ++i)
        r.series.push_back(SeriesPoint{iters[i].get<int64_t>(), wall[i].get<double>(),
                                       best[i].get<double>()});
    r.instance_hash = need_str(j, "instance_hash");
    r.prices_hash = need_str(j, "prices_hash");
    r.config_json = need(j, "config").dump(2) + "\n";
    return r;
}

// ---------------------------------------------------------------------------
// solve

RunReport cmd_solve(const ExperimentConfig& cfg, const std::string& artifact_dir,
                    const std::string& out_dir) {
    if (!(cfg.budget_seconds > 0.0) && cfg.schedule.max_iters < 0)
        throw std::invalid_argument("solve: either budget_seconds > 0 or max_iters >= 0 required");
    const std::string instance_path = join(artifact_dir, "instance.json");
    const std::string prices_path = join(artifact_dir, "prices.json");
    for (const auto& p : {instance_path, prices_path})
        if (!file_exists(p)) throw std::runtime_error("solve: missing artifact '" + p + "'");
    if (cfg.instance_hash.empty() || cfg.prices_hash.empty())
        throw std::runtime_error("solve: config carries no artifact hashes; run generate first");
    if (hex64(file_hash(instance_path)) != cfg.instance_hash)
        throw std::runtime_error("solve: instance hash mismatch against config");
    if (hex64(file_hash(prices_path)) != cfg.prices_hash)
        throw std::runtime_error("solve: price-path hash mismatch against config");

    const BlockModel model = load_instance_json(read_file(instance_path));
    const PricePathSet prices = load_paths_json(read_file(prices_path));
    if (prices.n_periods != cfg.n_periods)
        throw std::runtime_error("solve: price paths cover a different horizon than the config");
    const Flowsheet fs = build_flowsheet(cfg);

    EconomicTerms econ;
    econ.price_paths = prices;
    econ.discount_rate = cfg.econ.discount_rate;
    econ.mining_cost = cfg.econ.mining_cost;
    econ.penalty_up = cfg.econ.penalty_up;
    econ.penalty_down = cfg.econ.penalty_down;
    econ.unit_conversion = cfg.econ.unit_conversion;

    const ScenarioSet scen = all_scenarios(model, prices);
    Evaluator ev(model, fs, econ, scen);

    const Solution initial = initial_solution(model, fs, econ);
    validate_solution(model, fs, initial);
    const double f0 = ev.evaluate(initial, false).total;

    AnnealSchedule schedule = cfg.schedule;
    if (!(schedule.temp0 > 0.0)) schedule.temp0 = calibrate_temp0(ev, initial, cfg.solve_seed);
    if (cfg.budget_seconds > 0.0) schedule.max_wall_seconds = cfg.budget_seconds;

    const branch::PolicyKind kind = branch::policy_kind_from_string(cfg.policy);
    std::unique_ptr<HeuristicSelector> selector;
    std::unique_ptr<BlockSampler> sampler;
    if (kind == branch::PolicyKind::baseline) {
        selector = std::make_unique<UniformSelector>(3);
        sampler = std::make_unique<UniformSampler>(model.n_blocks());
    } else {
        if (cfg.use_guide)
            selector = std::make_unique<guide::GuideSelector>(cfg.guide_cfg, cfg.solve_seed);
        else
            selector = std::make_unique<UniformSelector>(3);
        sampler = std::make_unique<branch::NeuralSampler>(kind, model, fs, cfg.branch_cfg,
                                                          cfg.solve_seed);
    }

    const RunResult run_res = run(ev, initial, *selector, *sampler, schedule, cfg.solve_seed);
    validate_solution(model, fs, run_res.best);
    const ObjectiveBreakdown final_bd = ev.evaluate(run_res.best, true);
    const std::array<double, 3> probs{0.1, 0.5, 0.9};

    RunReport rep;
    rep.policy = cfg.policy;
    rep.seed = cfg.solve_seed;
    rep.budget_seconds = cfg.budget_seconds;
    rep.iters = run_res.iters;
    rep.wall_seconds = run_res.wall_seconds;
    rep.best_objective = run_res.best_objective;
    rep.revenue_term = final_bd.revenue_term;
    rep.penalty_term = final_bd.penalty_term;
    rep.npv_quantiles = npv_quantiles(final_bd, probs);
    rep.instance_hash = cfg.instance_hash;
    rep.prices_hash = cfg.prices_hash;
    {
        ExperimentConfig echo = cfg;
        rep.config_json = save_config_json(echo);
    }

    rep.series.push_back(SeriesPoint{-1, 0.0, f0});
    double last_best = f0;
    for (const TraceRecord& r : run_res.trace.records()) {
        if (r.best_so_far > last_best) {
            rep.series.push_back(SeriesPoint{r.iter, r.elapsed_s, r.best_so_far});
            last_best = r.best_so_far;
        }
    }
    if (rep.series.back().iter != run_res.iters)
        rep.series.push_back(SeriesPoint{run_res.iters, run_res.wall_seconds, run_res.best_objective});

    const std::string out = out_dir.empty() ? artifact_dir : out_dir;
    if (out != "-") {
        std::filesystem::create_directories(out);
        const std::string tag = cfg.policy + "_s" + std::to_string(cfg.solve_seed);
        write_file(join(out, "report_" + tag + ".json"), save_report_json(rep));
        const uint64_t cfg_hash = fnv1a64(rep.config_json.data(), rep.config_json.size());
        write_file(join(out, "trace_" + tag + ".csv"),
                   "# config_hash=" + hex64(cfg_hash) + "\n" + run_res.trace.to_csv());
    }
    return rep;
}

// ---------------------------------------------------------------------------
// compare

CompareResult cmd_compare(const std::vector<RunReport>& reports) {
    if (reports.empty()) throw std::runtime_error("compare: no reports given");
    CompareResult res;
    res.instance_hash = reports.front().instance_hash;
    res.reference = reports.front().best_objective;
    for (const auto& r : reports) {
        if (r.instance_hash != res.instance_hash || r.prices_hash != reports.front().prices_hash)
            throw std::runtime_error("compare: reports come from different instances");
        res.reference = std::max(res.reference, r.best_objective);
    }
    const double denom = std::abs(res.reference) > 0.0 ? std::abs(res.reference) : 1.0;

    for (const auto& r : reports) {
        CompareRow row;
        row.policy = r.policy;
        row.seed = r.seed;
        row.final_objective = r.best_objective;
        row.final_subopt = (res.reference - r.best_objective) / denom;
        row.npv_quantiles = r.npv_quantiles;
        for (const double thr : res.thresholds) {
            ThresholdHit hit;
            for (const auto& p : r.series) {
                if ((res.reference - p.best) / denom <= thr) {
                    hit.reached = true;
                    hit.iters = std::max<int64_t>(p.iter, 0);
                    hit.wall = p.wall;
                    break;
                }
            }
            row.hits.push_back(hit);
        }
        res.rows.push_back(std::move(row));
    }

    for (size_t t = 0; t < res.thresholds.size(); ++t) {
        int64_t fastest = -1;
        for (const auto& row : res.rows)
            if (row.hits[t].reached && (fastest < 0 || row.hits[t].iters < fastest))
                fastest = row.hits[t].iters;
        for (auto& row : res.rows)
            if (row.hits[t].reached)
                row.hits[t].ratio = static_cast<double>(std::max<int64_t>(row.hits[t].iters, 1)) /
                                    static_cast<double>(std::max<int64_t>(fastest, 1));
    }
    return res;
}

std::string compare_csv(const CompareResult& c) {
    std::ostringstream out;
    out.precision(17);
    out << "# reference=" << c.reference << " instance=" << c.instance_hash << "\n";
    out << "policy,seed,final_objective,final_subopt,npv_p10,npv_p50,npv_p90,threshold,iters,wall,"
           "ratio\n";
    for (const auto& row : c.rows) {
        for (size_t t = 0; t < c.thresholds.size(); ++t) {
            out << row.policy << ',' << row.seed << ',' << row.final_objective << ','
                << row.final_subopt << ',';
            for (int q = 0; q < 3; ++q)
                out << (q < static_cast<int>(row.npv_quantiles.size()) ? row.npv_quantiles[q] : 0.0)
                    << ',';
            out << c.thresholds[t] << ',';
            const auto& hit = row.hits[t];
            if (hit.reached)
                out << hit.iters << ',' << hit.wall << ',' << hit.ratio << "\n";
            else
                out << "unreached,unreached,unreached\n";
        }
    }
    return out.str();
}

std::string compare_text(const CompareResult& c) {
    std::ostringstream out;
    out << "reference objective (cross-method best): " << c.reference << "\n";
    out << "instance: " << c.instance_hash << "\n\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-10s %6s %16s %10s", "policy", "seed", "final", "subopt");
    out << buf;
    for (const double thr : c.thresholds) {
        std::snprintf(buf, sizeof(buf), "  iters@%2.0f%%", thr * 100.0);
        out << buf;
    }
    out << "  npv p10/p50/p90\n";
    for (const auto& row : c.rows) {
        std::snprintf(buf, sizeof(buf), "%-10s %6llu %16.6g %9.3f%%", row.policy.c_str(),
                      static_cast<unsigned long long>(row.seed), row.final_objective,
                      row.final_subopt * 100.0);
        out << buf;
        for (const auto& hit : row.hits) {
            if (hit.reached)
                std::snprintf(buf, sizeof(buf), "  %11lld", static_cast<long long>(hit.iters));
            else
                std::snprintf(buf, sizeof(buf), "  %11s", "unreached");
            out << buf;
        }
        out << "  ";
        for (size_t q = 0; q < row.npv_quantiles.size(); ++q)
            out << (q ? "/" : "") << row.npv_quantiles[q];
        out << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// selfcheck

namespace {

struct MiniWorld {
    BlockModel model;
    Flowsheet fs;
    EconomicTerms econ;
    ScenarioSet scen;
};

MiniWorld mini_world(uint64_t seed) {
    SupplyScenarioSpec spec;
    spec.n_scenarios = 2;
    spec.seed = seed;
    MiniWorld w{generate_block_model({4, 3, 3}, spec), Flowsheet{}, EconomicTerms{}, ScenarioSet{}};
    FlowNode mine{"mine", NodeKind::mine, 120000.0, true, 0.0, 1.0, 0.0, 1.0};
    FlowNode mill{"mill", NodeKind::processor, 60000.0, true, 0.0, 0.9, 10.0, 1.0};
    FlowNode product{"product", NodeKind::market_sink, 0.0, false, 0.0, 1.0, 0.0, 1.0};
    FlowNode dump{"dump", NodeKind::market_sink, 0.0, false, 0.0, 1.0, 0.0, 0.0};
    w.fs = Flowsheet({mine, mill, product, dump}, {{0, 1}, {0, 3}, {1, 2}}, 4, 4);
    w.econ.price_paths = simulate_mrj(MrjParams{}, 4, 3, seed + 1);
    w.scen = all_scenarios(w.model, w.econ.price_paths);
    return w;
}

}  // namespace

SelfCheckResult cmd_selfcheck(uint64_t seed) {
    SelfCheckResult res;
    res.ok = true;
    std::ostringstream out;
    auto line = [&](bool ok, const std::string& what) {
        out << (ok ? "[PASS] " : "[FAIL] ") << what << "\n";
        res.ok = res.ok && ok;
    };

    // gradient suite: every layer kind against central finite differences
    for (const std::string kind : {"dense", "relu", "conv3d", "graphconv", "softmax_head"}) {
        double worst = 0.0;
        for (uint64_t k = 0; k < 3; ++k) {
            fdcheck::FdCase fc = fdcheck::make_fd_case(kind, seed + 100 * k + 7);
            worst = std::max(worst, fdcheck::fd_check(fc.net, fc.input, seed + k).max_rel_err);
        }
        std::ostringstream what;
        what << "gradients " << kind << " (max rel err " << worst << ")";
        line(worst < 1e-4, what.str());
    }

    // oracle suite: delta evaluation against full recomputation along a chain
    {
        MiniWorld w = mini_world(seed + 11);
        Evaluator ev(w.model, w.fs, w.econ, w.scen);
        Evaluator ev_full(w.model, w.fs, w.econ, w.scen);
        Solution sol = initial_solution(w.model, w.fs, w.econ);
        ev.evaluate(sol, false);
        auto rng = make_rng(seed, 0x5e1fc8ecull);
        const SamplingDistribution uni = uniform_distribution(w.model.n_blocks());
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
            Perturbation p;
            switch (i % 3) {
                case 0: p = perturb_extraction(w.model, w.fs, sol, uni, rng); break;
                case 1: p = perturb_destination(w.fs, sol, rng); break;
                default: p = perturb_stream(w.fs, sol, rng, 0.1); break;
            }
            apply(sol, p);
            const double quick = ev.evaluate_delta(sol, p, false).total;
            const double full = ev_full.evaluate(sol, false).total;
            worst = std::max(worst, std::abs(quick - full) / std::max(1.0, std::abs(full)));
            ev.commit_candidate();
        }
        std::ostringstream what;
        what << "evaluator delta vs full recompute over 200 moves (max rel err " << worst << ")";
        line(worst < 1e-9, what.str());
    }

    // distribution validity: guide actions and block-sampling distributions
    {
        MiniWorld w = mini_world(seed + 23);
        guide::GuideConfig gc;
        guide::GuideAgent agent(gc, seed);
        guide::GuideState state;
        auto rng = make_rng(seed, 0xd157ull);
        bool ok = true;
        for (int i = 0; i < 1000; ++i) {
            state.push(i % 3, std::sin(0.1 * i), 1.0 + (i % 4), i % 2 == 0);
            const guide::GuideAction a = agent.score_heuristics(state, 0.1, rng);
            double sum = 0.0;
            for (double p : a.probs) {
                ok = ok && p >= 0.0;
                sum += p;
            }
            ok = ok && std::abs(sum - 1.0) <= 1e-9;
        }
        Solution sol = initial_solution(w.model, w.fs, w.econ);
        for (auto kind : {branch::PolicyKind::nn_nb, branch::PolicyKind::gnn_nb}) {
            branch::NeuralSampler smp(kind, w.model, w.fs, branch::BranchConfig{}, seed + 3);
            const SamplingDistribution d = smp.compute_distribution(sol);
            double sum = 0.0;
            for (double p : d.probabilities) {
                ok = ok && p >= 0.0;
                sum += p;
            }
            ok = ok && std::abs(sum - 1.0) <= 1e-12;
        }
        line(ok, "sampling distributions nonnegative and normalized");
    }

    // restore correctness: rejected moves must put the solution state back
    {
        MiniWorld w = mini_world(seed + 31);
        Solution sol = initial_solution(w.model, w.fs, w.econ);
        auto rng = make_rng(seed, 0x4e57ull);
        const SamplingDistribution uni = uniform_distribution(w.model.n_blocks());
        bool ok = true;
        for (int i = 0; i < 500; ++i) {
            const uint64_t before = solution_hash(sol);
            Perturbation p;
            switch (i % 3) {
                case 0: p = perturb_extraction(w.model, w.fs, sol, uni, rng); break;
                case 1: p = perturb_destination(w.fs, sol, rng); break;
                default: p = perturb_stream(w.fs, sol, rng, 0.1); break;
            }
            apply(sol, p);
            undo(sol, p);
            ok = ok && solution_hash(sol) == before;
        }
        line(ok, "perturbation undo restores the exact solution state (500 moves)");
    }

    res.text = out.str();
    return res;
}

}  // namespace minesched::bench
