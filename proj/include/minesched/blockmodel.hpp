#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace minesched {

/// Flat index into the block grid; index = x + nx*y + nx*ny*z, z = 0 at surface.
struct BlockId {
    int32_t index = 0;
    int32_t x = 0, y = 0, z = 0;
};

enum class MaterialType : uint8_t { waste = 0, ore = 1 };

struct BlockAttributes {
    double tonnage = 0.0;               // tonnes, scenario-independent
    std::vector<double> grade;          // one value per supply scenario
    std::vector<MaterialType> material; // ore iff grade >= ore_threshold, per scenario
};

enum class SlopePattern : uint8_t { one_point = 0, five_point = 1 };

struct SupplyScenarioSpec {
    int n_scenarios = 1;
    double mean_grade = 0.5;
    double variance = 0.04;        // grade^2
    double correlation_range = 3.0; // block units
    double ore_threshold = 0.3;
    uint64_t seed = 0;
};

/// Undirected 6-neighborhood adjacency over the grid (CSR layout), the graph
/// a graph-based sampling policy consumes. Neighbor order within a row is the
/// builder's fixed enumeration order; permutation tests rely on preserving it.
struct BlockGraph {
    int n_nodes = 0;
    std::vector<int32_t> row_begin; // size n_nodes + 1
    std::vector<int32_t> neighbors; // 2 * n_edges entries
    int n_edges() const { return static_cast<int>(neighbors.size()) / 2; }
};

class BlockModel {
public:
    BlockModel() = default;
    BlockModel(std::array<int, 3> dims, std::vector<BlockAttributes> blocks,
               SupplyScenarioSpec spec, SlopePattern pattern);

    int nx() const { return dims_[0]; }
    int ny() const { return dims_[1]; }
    int nz() const { return dims_[2]; }
    int n_blocks() const { return nx() * ny() * nz(); }
    int n_scenarios() const { return spec_.n_scenarios; }
    const SupplyScenarioSpec& spec() const { return spec_; }
    SlopePattern slope_pattern() const { return pattern_; }

    BlockId id_from_index(int32_t index) const;
    BlockId id_from_coords(int x, int y, int z) const;
    bool contains(const BlockId& b) const;

    const BlockAttributes& attrs(int32_t index) const { return blocks_[static_cast<size_t>(index)]; }
    const std::vector<BlockAttributes>& blocks() const { return blocks_; }

    /// Immediate predecessors (overlying blocks that must be mined first).
    const std::vector<int32_t>& predecessors(int32_t index) const;
    /// Immediate successors (blocks whose predecessor set contains `index`).
    const std::vector<int32_t>& successors(int32_t index) const;

    /// Largest grade over all blocks and scenarios; fixes destination-policy bin edges.
    double max_grade() const { return max_grade_; }
    double total_tonnage() const { return total_tonnage_; }

    uint64_t content_hash() const;

private:
    void build_precedence();

    std::array<int, 3> dims_{0, 0, 0};
    std::vector<BlockAttributes> blocks_;
    SupplyScenarioSpec spec_;
    SlopePattern pattern_ = SlopePattern::five_point;
    std::vector<std::vector<int32_t>> preds_;
    std::vector<std::vector<int32_t>> succs_;
    double max_grade_ = 0.0;
    double total_tonnage_ = 0.0;
};

/// Synthetic instance generator: grades are draws from a spatially correlated
/// Gaussian field (separable smoothing, unit variance), scaled to
/// mean_grade + sqrt(variance) * field and truncated at zero.
BlockModel generate_block_model(std::array<int, 3> dims, const SupplyScenarioSpec& spec,
                                SlopePattern pattern = SlopePattern::five_point,
                                double block_tonnage = 10000.0);

std::vector<BlockId> predecessors(const BlockModel& model, const BlockId& b);

BlockGraph block_graph(const BlockModel& model);

/// Per-node feature matrix for sampling policies: tonnage (normalized), grade
/// mean/std across scenarios, coords in [0,1], extraction period (normalized,
/// -1 if not mined), destination one-hot. Width = 7 + n_destinations.
struct Solution;  // flowsheet.hpp
struct BlockFeatureTable {
    int width = 0;
    std::vector<double> data; // row-major [n_blocks x width]
};

std::string save_instance_json(const BlockModel& model);
BlockModel load_instance_json(const std::string& text);

}  // namespace minesched
