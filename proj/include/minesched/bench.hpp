#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "minesched/anneal.hpp"
#include "minesched/blockmodel.hpp"
#include "minesched/branch.hpp"
#include "minesched/flowsheet.hpp"
#include "minesched/guide.hpp"
#include "minesched/market.hpp"

namespace minesched::bench {

inline constexpr const char* kLibVersion = "0.1.0";
inline constexpr int kConfigSchema = 1;
inline constexpr int kReportSchema = 1;

/// Synthetic instance description: grid, supply-scenario field, block mass.
struct InstanceSpec {
    std::array<int, 3> dims{12, 12, 6};
    double block_tonnage = 10000.0;
    SupplyScenarioSpec supply;  // n_scenarios, grade field, ore threshold, seed
    SlopePattern slope = SlopePattern::five_point;
};

/// Price-model choice plus both parameter sets; only the selected one is used.
struct PriceSpec {
    std::string model = "mrj";  // "mrj" | "gbmj"
    MrjParams mrj;
    GbmjParams gbmj;
    int n_paths = 50;
    uint64_t seed = 21;
};

/// Flat economic terms; the price paths themselves live in the price artifact.
struct EconSpec {
    double discount_rate = 0.10;
    double mining_cost = 2.0;
    double penalty_up = 10.0;
    double penalty_down = 0.0;
    double unit_conversion = 2204.62;
};

/// Everything a run needs, serializable as one schema-versioned JSON document
/// that round-trips byte-identically. All seeds are explicit fields.
struct ExperimentConfig {
    int schema_version = kConfigSchema;
    std::string name = "desk-copper";

    InstanceSpec instance;
    PriceSpec price;

    // flowsheet topology
    int n_periods = 8;
    int n_bins = 5;
    std::vector<FlowNode> nodes;
    std::vector<std::pair<std::string, std::string>> arcs;  // by node id

    EconSpec econ;

    // anneal schedule; temp0 <= 0 requests warmup auto-calibration at solve time
    AnnealSchedule schedule;

    guide::GuideConfig guide_cfg;
    branch::BranchConfig branch_cfg;

    std::string policy = "baseline";  // baseline | nn-nb | cnn-nb | gnn-nb
    /// Neural policies: pick heuristics with the learned guide (the combined
    /// method) or uniformly (isolates the sampling policy for benchmarking).
    bool use_guide = true;
    double budget_seconds = 60.0;
    uint64_t solve_seed = 1;
    std::string out_dir = "out";

    // content hashes of the generated artifacts (hex), filled by cmd_generate;
    // cmd_solve refuses to run when the files on disk disagree.
    std::string instance_hash;
    std::string prices_hash;
};

/// Desk-scale default: 864-block copper instance, MRJ prices, 8 periods,
/// 10 supply x 50 price scenarios, mill/stockpile/dump flowsheet.
ExperimentConfig desk_config();
/// desk_config with the mean-reverting-jump copper price row.
ExperimentConfig copper_preset();
/// Desk instance priced with the trending-GBM gold row (per-ounce units).
ExperimentConfig gold_preset();

std::string save_config_json(const ExperimentConfig& cfg);
/// Throws std::invalid_argument on schema violations or unknown enum text.
ExperimentConfig load_config_json(const std::string& text);

/// Builds the Flowsheet described by the config's nodes/arcs tables.
Flowsheet build_flowsheet(const ExperimentConfig& cfg);

// ---------------------------------------------------------------------------
// generate

struct GenerateResult {
    std::string config_path;
    std::string instance_path;
    std::string prices_path;
    std::string instance_hash;  // hex of the file bytes
    std::string prices_hash;
};

/// Writes instance.json, prices.json and the config echo (hashes filled) into
/// out_dir. Throws std::runtime_error when a target exists and !force.
GenerateResult cmd_generate(const ExperimentConfig& cfg, const std::string& out_dir, bool force);

// ---------------------------------------------------------------------------
// solve

struct SeriesPoint {
    int64_t iter = 0;   // iteration index of the improvement
    double wall = 0.0;  // cumulative seconds at that iteration (timing field)
    double best = 0.0;  // best objective so far
};

struct RunReport {
    int schema_version = kReportSchema;
    std::string lib_version = kLibVersion;
    std::string policy;
    uint64_t seed = 0;
    double budget_seconds = 0.0;

    int64_t iters = 0;
    double wall_seconds = 0.0;  // timing field
    double best_objective = 0.0;
    double revenue_term = 0.0;
    double penalty_term = 0.0;
    std::vector<double> npv_quantiles;  // P10, P50, P90 over joint scenarios

    /// Best-so-far change points; first entry is the initial solution at
    /// iter -1, last entry matches best_objective.
    std::vector<SeriesPoint> series;

    std::string instance_hash;
    std::string prices_hash;
    std::string config_json;  // full config echo
};

/// Suboptimality of each series point against a reference objective:
/// (reference - best) / |reference|; nonincreasing along a run's series.
std::vector<double> suboptimality(const std::vector<SeriesPoint>& series, double reference);

std::string save_report_json(const RunReport& r);
RunReport load_report_json(const std::string& text);

/// Runs the configured policy on the artifacts in artifact_dir (hash-checked)
/// and writes report_<policy>_s<seed>.json plus trace_<policy>_s<seed>.csv
/// into out_dir (empty out_dir = artifact_dir, "-" = do not write).
/// Throws std::runtime_error on missing files or hash mismatch.
RunReport cmd_solve(const ExperimentConfig& cfg, const std::string& artifact_dir,
                    const std::string& out_dir);

// ---------------------------------------------------------------------------
// compare

struct ThresholdHit {
    bool reached = false;
    int64_t iters = 0;   // first iteration at or below the threshold
    double wall = 0.0;   // cumulative seconds at that iteration
    double ratio = 0.0;  // iters / (fastest method's iters); 1.0 for the fastest
};

struct CompareRow {
    std::string policy;
    uint64_t seed = 0;
    double final_objective = 0.0;
    double final_subopt = 0.0;
    std::vector<double> npv_quantiles;
    std::vector<ThresholdHit> hits;  // one per threshold
};

struct CompareResult {
    double reference = 0.0;  // best objective over all compared reports
    std::vector<double> thresholds{0.10, 0.05, 0.01};
    std::vector<CompareRow> rows;
    std::string instance_hash;
};

/// Thresholds are evaluated against the cross-report best objective. Throws
/// std::runtime_error when the reports' instance hashes disagree.
CompareResult cmd_compare(const std::vector<RunReport>& reports);

std::string compare_csv(const CompareResult& c);
std::string compare_text(const CompareResult& c);

// ---------------------------------------------------------------------------
// selfcheck

struct SelfCheckResult {
    bool ok = false;
    std::string text;  // one line per check, [PASS]/[FAIL] prefixed
};

/// Fast internal suites: finite-difference gradients for every layer kind,
/// delta-vs-full evaluator agreement on a random instance, distribution
/// validity, and solution restore hashes.
SelfCheckResult cmd_selfcheck(uint64_t seed);

}  // namespace minesched::bench
