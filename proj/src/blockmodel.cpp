#include "minesched/blockmodel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "minesched/common.hpp"

namespace minesched {

using json = nlohmann::ordered_json;

BlockModel::BlockModel(std::array<int, 3> dims, std::vector<BlockAttributes> blocks,
                       SupplyScenarioSpec spec, SlopePattern pattern)
    : dims_(dims), blocks_(std::move(blocks)), spec_(spec), pattern_(pattern) {
    if (dims_[0] < 1 || dims_[1] < 1 || dims_[2] < 1)
        throw std::invalid_argument("BlockModel: zero-volume dims");
    if (static_cast<int>(blocks_.size()) != n_blocks())
        throw std::invalid_argument("BlockModel: block count does not match dims");
    for (const auto& b : blocks_) {
        if (!(b.tonnage > 0.0)) throw std::invalid_argument("BlockModel: tonnage must be > 0");
        if (static_cast<int>(b.grade.size()) != spec_.n_scenarios)
            throw std::invalid_argument("BlockModel: grade vector length != n_scenarios");
        for (double g : b.grade) {
            if (!(g >= 0.0)) throw std::invalid_argument("BlockModel: negative grade");
            max_grade_ = std::max(max_grade_, g);
        }
        total_tonnage_ += b.tonnage;
    }
    build_precedence();
}

BlockId BlockModel::id_from_index(int32_t index) const {
    if (index < 0 || index >= n_blocks()) throw std::out_of_range("BlockId index out of range");
    BlockId b;
    b.index = index;
    b.x = index % nx();
    b.y = (index / nx()) % ny();
    b.z = index / (nx() * ny());
    return b;
}

BlockId BlockModel::id_from_coords(int x, int y, int z) const {
    if (x < 0 || x >= nx() || y < 0 || y >= ny() || z < 0 || z >= nz())
        throw std::out_of_range("BlockId coords out of range");
    return BlockId{x + nx() * (y + ny() * z), x, y, z};
}

bool BlockModel::contains(const BlockId& b) const {
    return b.index >= 0 && b.index < n_blocks() && b.x >= 0 && b.x < nx() && b.y >= 0 &&
           b.y < ny() && b.z >= 0 && b.z < nz() &&
           b.index == b.x + nx() * (b.y + ny() * b.z);
}

void BlockModel::build_precedence() {
    preds_.assign(static_cast<size_t>(n_blocks()), {});
    succs_.assign(static_cast<size_t>(n_blocks()), {});
    for (int z = 1; z < nz(); ++z) {
        for (int y = 0; y < ny(); ++y) {
            for (int x = 0; x < nx(); ++x) {
                const int32_t b = x + nx() * (y + ny() * z);
                auto add = [&](int px, int py) {
                    if (px < 0 || px >= nx() || py < 0 || py >= ny()) return;
                    const int32_t p = px + nx() * (py + ny() * (z - 1));
                    preds_[static_cast<size_t>(b)].push_back(p);
                    succs_[static_cast<size_t>(p)].push_back(b);
                };
                add(x, y);
                if (pattern_ == SlopePattern::five_point) {
                    add(x - 1, y);
                    add(x + 1, y);
                    add(x, y - 1);
                    add(x, y + 1);
                }
            }
        }
    }
}

const std::vector<int32_t>& BlockModel::predecessors(int32_t index) const {
    if (index < 0 || index >= n_blocks()) throw std::out_of_range("predecessors: bad index");
    return preds_[static_cast<size_t>(index)];
}

const std::vector<int32_t>& BlockModel::successors(int32_t index) const {
    if (index < 0 || index >= n_blocks()) throw std::out_of_range("successors: bad index");
    return succs_[static_cast<size_t>(index)];
}

uint64_t BlockModel::content_hash() const {
    Hasher h;
    h.scalar(dims_[0]);
    h.scalar(dims_[1]);
    h.scalar(dims_[2]);
    h.scalar(spec_.n_scenarios);
    h.scalar(static_cast<uint8_t>(pattern_));
    for (const auto& b : blocks_) {
        h.scalar(b.tonnage);
        h.range<double>(b.grade);
    }
    return h.digest();
}

namespace {

// Gaussian smoothing taps for one axis, truncated at 3 sigma. Taps are
// renormalized to unit L2 norm at each position so the smoothed white noise
// keeps unit variance including at grid borders.
std::vector<double> gaussian_taps(double range) {
    const double sigma = std::max(range / std::sqrt(2.0), 1e-9);
    const int reach = std::max(0, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> taps(static_cast<size_t>(2 * reach + 1));
    for (int d = -reach; d <= reach; ++d)
        taps[static_cast<size_t>(d + reach)] = std::exp(-0.5 * (d * d) / (sigma * sigma));
    return taps;
}

void smooth_axis(std::vector<double>& field, std::array<int, 3> dims, int axis,
                 const std::vector<double>& taps) {
    const int reach = (static_cast<int>(taps.size()) - 1) / 2;
    if (reach == 0) return;
    const int nx = dims[0], ny = dims[1], nz = dims[2];
    const int stride[3] = {1, nx, nx * ny};
    const int len[3] = {nx, ny, nz};
    const int n = len[axis];
    std::vector<double> line(static_cast<size_t>(n));
    std::vector<double> out(static_cast<size_t>(n));

    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int j = 0; j < len[a1]; ++j) {
        for (int k = 0; k < len[a2]; ++k) {
            const int base = j * stride[a1] + k * stride[a2];
            for (int i = 0; i < n; ++i) line[static_cast<size_t>(i)] = field[static_cast<size_t>(base + i * stride[axis])];
            for (int i = 0; i < n; ++i) {
                double acc = 0.0, norm2 = 0.0;
                const int lo = std::max(0, i - reach), hi = std::min(n - 1, i + reach);
                for (int s = lo; s <= hi; ++s) {
                    const double w = taps[static_cast<size_t>(s - i + reach)];
                    acc += w * line[static_cast<size_t>(s)];
                    norm2 += w * w;
                }
                out[static_cast<size_t>(i)] = acc / std::sqrt(norm2);
            }
            for (int i = 0; i < n; ++i) field[static_cast<size_t>(base + i * stride[axis])] = out[static_cast<size_t>(i)];
        }
    }
}

}  // namespace

BlockModel generate_block_model(std::array<int, 3> dims, const SupplyScenarioSpec& spec,
                                SlopePattern pattern, double block_tonnage) {
    if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1)
        throw std::invalid_argument("generate_block_model: zero-volume dims");
    if (spec.n_scenarios < 1) throw std::invalid_argument("generate_block_model: n_scenarios < 1");
    if (!(spec.variance >= 0.0)) throw std::invalid_argument("generate_block_model: variance < 0");
    if (!(spec.correlation_range > 0.0))
        throw std::invalid_argument("generate_block_model: correlation_range <= 0");
    if (!(block_tonnage > 0.0)) throw std::invalid_argument("generate_block_model: tonnage <= 0");

    const int n = dims[0] * dims[1] * dims[2];
    std::vector<BlockAttributes> blocks(static_cast<size_t>(n));
    for (auto& b : blocks) {
        b.tonnage = block_tonnage;
        b.grade.resize(static_cast<size_t>(spec.n_scenarios));
        b.material.resize(static_cast<size_t>(spec.n_scenarios));
    }

    const auto taps = gaussian_taps(spec.correlation_range);
    const double sd = std::sqrt(spec.variance);
    std::vector<double> field(static_cast<size_t>(n));
    for (int s = 0; s < spec.n_scenarios; ++s) {
        auto rng = make_rng(spec.seed, static_cast<uint64_t>(s));
        std::normal_distribution<double> gauss(0.0, 1.0);
        for (auto& v : field) v = gauss(rng);
        for (int axis = 0; axis < 3; ++axis) smooth_axis(field, dims, axis, taps);
        for (int i = 0; i < n; ++i) {
            const double g = std::max(0.0, spec.mean_grade + sd * field[static_cast<size_t>(i)]);
            blocks[static_cast<size_t>(i)].grade[static_cast<size_t>(s)] = g;
            blocks[static_cast<size_t>(i)].material[static_cast<size_t>(s)] =
                g >= spec.ore_threshold ? MaterialType::ore : MaterialType::waste;
        }
    }
    return BlockModel(dims, std::move(blocks), spec, pattern);
}

std::vector<BlockId> predecessors(const BlockModel& model, const BlockId& b) {
    if (!model.contains(b)) throw std::out_of_range("predecessors: block not in model");
    std::vector<BlockId> out;
    for (int32_t p : model.predecessors(b.index)) out.push_back(model.id_from_index(p));
    return out;
}

BlockGraph block_graph(const BlockModel& model) {
    BlockGraph g;
    g.n_nodes = model.n_blocks();
    g.row_begin.assign(static_cast<size_t>(g.n_nodes) + 1, 0);
    const int nx = model.nx(), ny = model.ny(), nz = model.nz();
    auto idx = [&](int x, int y, int z) { return x + nx * (y + ny * z); };
    // fixed enumeration order: -x, +x, -y, +y, -z, +z
    const int dx[6] = {-1, 1, 0, 0, 0, 0};
    const int dy[6] = {0, 0, -1, 1, 0, 0};
    const int dz[6] = {0, 0, 0, 0, -1, 1};
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const int b = idx(x, y, z);
                for (int d = 0; d < 6; ++d) {
                    const int xx = x + dx[d], yy = y + dy[d], zz = z + dz[d];
                    if (xx < 0 || xx >= nx || yy < 0 || yy >= ny || zz < 0 || zz >= nz) continue;
                    g.neighbors.push_back(idx(xx, yy, zz));
                    ++g.row_begin[static_cast<size_t>(b) + 1];
                }
            }
    for (size_t i = 1; i < g.row_begin.size(); ++i) g.row_begin[i] += g.row_begin[i - 1];
    return g;
}

std::string save_instance_json(const BlockModel& model) {
    json j;
    j["format"] = "minesched.instance";
    j["version"] = 1;
    j["dims"] = {model.nx(), model.ny(), model.nz()};
    j["n_scenarios"] = model.n_scenarios();
    j["seed"] = model.spec().seed;
    j["slope_pattern"] = model.slope_pattern() == SlopePattern::five_point ? "five_point" : "one_point";
    j["spec"] = {{"n_scenarios", model.spec().n_scenarios},
                 {"mean_grade", model.spec().mean_grade},
                 {"variance", model.spec().variance},
                 {"correlation_range", model.spec().correlation_range},
                 {"ore_threshold", model.spec().ore_threshold},
                 {"seed", model.spec().seed}};
    json blocks = json::array();
    for (int i = 0; i < model.n_blocks(); ++i) {
        const auto& b = model.attrs(i);
        blocks.push_back({{"t", b.tonnage}, {"g", b.grade}});
    }
    j["blocks"] = std::move(blocks);
    return j.dump();
}

BlockModel load_instance_json(const std::string& text) {
    const json j = json::parse(text);
    if (j.at("format") != "minesched.instance")
        throw std::runtime_error("load_instance_json: wrong format tag");
    if (j.at("version").get<int>() != 1)
        throw std::runtime_error("load_instance_json: unsupported version");
    std::array<int, 3> dims{j.at("dims").at(0), j.at("dims").at(1), j.at("dims").at(2)};
    SupplyScenarioSpec spec;
    const auto& js = j.at("spec");
    spec.n_scenarios = js.at("n_scenarios");
    spec.mean_grade = js.at("mean_grade");
    spec.variance = js.at("variance");
    spec.correlation_range = js.at("correlation_range");
    spec.ore_threshold = js.at("ore_threshold");
    spec.seed = js.at("seed");
    const SlopePattern pattern = j.at("slope_pattern") == "five_point" ? SlopePattern::five_point
                                                                       : SlopePattern::one_point;
    std::vector<BlockAttributes> blocks;
    blocks.reserve(j.at("blocks").size());
    for (const auto& jb : j.at("blocks")) {
        BlockAttributes b;
        b.tonnage = jb.at("t");
        b.grade = jb.at("g").get<std::vector<double>>();
        b.material.resize(b.grade.size());
        for (size_t s = 0; s < b.grade.size(); ++s)
            b.material[s] = b.grade[s] >= spec.ore_threshold ? MaterialType::ore : MaterialType::waste;
        blocks.push_back(std::move(b));
    }
    return BlockModel(dims, std::move(blocks), spec, pattern);
}

}  // namespace minesched
