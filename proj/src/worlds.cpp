#include "phil/worlds.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "phil/json_io.hpp"
#include "phil/oracle.hpp"

namespace phil {

namespace {

constexpr int kMaxAttempts = 100;

const std::vector<std::pair<WorldFamily, std::string>>& family_names() {
    static const std::vector<std::pair<WorldFamily, std::string>> names{
        {WorldFamily::AlternatingGaps, "alternating_gaps"},
        {WorldFamily::SingleBugtrap, "single_bugtrap"},
        {WorldFamily::ShiftingGaps, "shifting_gaps"},
        {WorldFamily::Forest, "forest"},
        {WorldFamily::BugtrapForest, "bugtrap_forest"},
        {WorldFamily::GapsForest, "gaps_forest"},
        {WorldFamily::Mazes, "mazes"},
        {WorldFamily::MultipleBugtraps, "multiple_bugtraps"},
        {WorldFamily::Room3d, "room3d"},
        {WorldFamily::File, "file"},
    };
    return names;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
    if (hi < lo) return lo;
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

double uniform_real(std::mt19937_64& rng, double lo, double hi) {
    if (hi <= lo) return lo;
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

void add_forest(Occupancy& occ, const WorldSpec& spec, double density_lo, double density_hi, std::mt19937_64& rng) {
    const double target = uniform_real(rng, density_lo, density_hi);
    const std::size_t cells = occ.blocked.size();
    std::size_t blocked = cells - occ.free_count();
    const std::size_t goal = static_cast<std::size_t>(target * static_cast<double>(cells));
    for (int tries = 0; blocked < goal && tries < 100000; ++tries) {
        const int s = uniform_int(rng, spec.obstacle_min, spec.obstacle_max);
        const int x = uniform_int(rng, 0, occ.width - 1);
        const int y = uniform_int(rng, 0, occ.height - 1);
        for (int yy = y; yy < std::min(y + s, occ.height); ++yy) {
            for (int xx = x; xx < std::min(x + s, occ.width); ++xx) {
                if (!occ.is_blocked(xx, yy)) {
                    occ.set(xx, yy, 0, true);
                    ++blocked;
                }
            }
        }
    }
}

// Full-width walls every `wall_spacing` rows, each with one gap on the left or
// right edge, sides alternating from a random first side.
void add_alternating_walls(Occupancy& occ, const WorldSpec& spec, std::mt19937_64& rng) {
    bool left = uniform_int(rng, 0, 1) == 0;
    int previous = 0;
    for (int k = 1;; ++k) {
        int y = k * spec.wall_spacing + uniform_int(rng, -spec.wall_jitter, spec.wall_jitter);
        y = std::max(y, previous + 2);
        if (y > occ.height - 2) break;
        for (int x = 0; x < occ.width; ++x) occ.set(x, y, 0, true);
        const int gw = std::min(spec.gap_width, occ.width);
        for (int i = 0; i < gw; ++i) occ.set(left ? i : occ.width - 1 - i, y, 0, false);
        left = !left;
        previous = y;
    }
}

void add_shifting_walls(Occupancy& occ, const WorldSpec& spec, std::mt19937_64& rng) {
    const int walls = uniform_int(rng, 2, 3);
    const int gw = std::clamp(std::max(2, spec.gap_width), 1, occ.width - 2);
    for (int k = 1; k <= walls; ++k) {
        const int y = k * occ.height / (walls + 1);
        for (int x = 0; x < occ.width; ++x) occ.set(x, y, 0, true);
        const int gx = uniform_int(rng, 1, occ.width - gw - 1);
        for (int i = 0; i < gw; ++i) occ.set(gx + i, y, 0, false);
    }
}

// C-shaped trap centred at (cx, cy) with side `s`: top and right walls are
// closed, the left and bottom walls are half-length so the mouth faces the
// bottom-left start corner.
void add_bugtrap(Occupancy& occ, int cx, int cy, int s) {
    const int x0 = cx - s / 2, x1 = cx + s / 2;
    const int y0 = cy - s / 2, y1 = cy + s / 2;
    auto block = [&](int x, int y) {
        if (occ.in_bounds(x, y)) occ.set(x, y, 0, true);
    };
    for (int x = x0; x <= x1; ++x) block(x, y1);
    for (int y = y0; y <= y1; ++y) block(x1, y);
    for (int y = cy; y <= y1; ++y) block(x0, y);
    for (int x = cx; x <= x1; ++x) block(x, y0);
}

void add_single_bugtrap(Occupancy& occ, std::mt19937_64& rng) {
    const int side = std::min(occ.width, occ.height);
    const int s = uniform_int(rng, side / 3, side / 2);
    const int jitter = std::max(1, side / 8);
    const int cx = occ.width / 2 + uniform_int(rng, -jitter, jitter);
    const int cy = occ.height / 2 + uniform_int(rng, -jitter, jitter);
    add_bugtrap(occ, cx, cy, s);
}

void add_multiple_bugtraps(Occupancy& occ, const WorldSpec& spec, std::mt19937_64& rng) {
    const int side = std::min(occ.width, occ.height);
    const int count = uniform_int(rng, spec.bugtraps_min, spec.bugtraps_max);
    for (int i = 0; i < count; ++i) {
        const int s = uniform_int(rng, std::max(3, side / 6), std::max(3, side / 4));
        const int cx = uniform_int(rng, s / 2 + 1, occ.width - s / 2 - 2);
        const int cy = uniform_int(rng, s / 2 + 1, occ.height - s / 2 - 2);
        add_bugtrap(occ, cx, cy, s);
    }
}

// Recursive division: walls on odd coordinates strictly inside the region,
// passages through even coordinates, so every region stays connected.
void divide(Occupancy& occ, int x0, int y0, int x1, int y1, std::mt19937_64& rng) {
    const int w = x1 - x0, h = y1 - y0;
    if (w < 2 || h < 2) return;
    bool horizontal = h > w ? true : (w > h ? false : uniform_int(rng, 0, 1) == 0);
    auto odd_between = [&](int lo, int hi) {
        const int first = lo % 2 == 0 ? lo + 1 : lo + 2;
        const int count = (hi - 1 - first) / 2 + 1;
        return first + 2 * uniform_int(rng, 0, std::max(0, count - 1));
    };
    auto even_between = [&](int lo, int hi) {
        const int first = lo % 2 == 0 ? lo : lo + 1;
        const int count = (hi - first) / 2 + 1;
        return first + 2 * uniform_int(rng, 0, std::max(0, count - 1));
    };
    if (horizontal) {
        const int y = odd_between(y0, y1);
        if (y <= y0 || y >= y1) return;
        const int gap = even_between(x0, x1);
        for (int x = x0; x <= x1; ++x) occ.set(x, y, 0, x != gap);
        divide(occ, x0, y0, x1, y - 1, rng);
        divide(occ, x0, y + 1, x1, y1, rng);
    } else {
        const int x = odd_between(x0, x1);
        if (x <= x0 || x >= x1) return;
        const int gap = even_between(y0, y1);
        for (int y = y0; y <= y1; ++y) occ.set(x, y, 0, y != gap);
        divide(occ, x0, y0, x - 1, y1, rng);
        divide(occ, x + 1, y0, x1, y1, rng);
    }
}

void add_room_blocks(Occupancy& occ, const WorldSpec& spec, std::mt19937_64& rng) {
    const int b = spec.block_size;
    for (int k = 0; k < spec.blocks; ++k) {
        const int x = uniform_int(rng, 0, occ.width - 1);
        const int y = uniform_int(rng, 0, occ.height - 1);
        const int z = uniform_int(rng, 0, occ.depth - 1);
        occ.fill_box(x, y, z, x + b - 1, y + b - 1, z + b - 1);
    }
}

std::array<int, 3> far_corner(const WorldSpec& spec) { return {spec.width - 1, spec.height - 1, spec.depth - 1}; }

}  // namespace

std::string to_string(WorldFamily f) {
    for (const auto& [family, name] : family_names()) {
        if (family == f) return name;
    }
    return "?";
}

WorldFamily parse_world_family(const std::string& name) {
    for (const auto& [family, n] : family_names()) {
        if (n == name) return family;
    }
    throw std::invalid_argument("unknown world family '" + name + "'");
}

std::string to_string(StartGoalPolicy p) {
    return p == StartGoalPolicy::FixedCorners ? "fixed_corners" : "uniform_random";
}

StartGoalPolicy parse_start_goal_policy(const std::string& name) {
    if (name == "fixed_corners") return StartGoalPolicy::FixedCorners;
    if (name == "uniform_random") return StartGoalPolicy::UniformRandom;
    throw std::invalid_argument("unknown start_goal_policy '" + name + "' (expected fixed_corners or uniform_random)");
}

void WorldSpec::validate() const {
    const bool is3d = family == WorldFamily::Room3d;
    if (family != WorldFamily::File) {
        if (width < 8 || height < 8 || (is3d && depth < 8)) throw std::invalid_argument("world: dimensions must be >= 8");
        if (!is3d && depth != 1) throw std::invalid_argument("world: depth must be 1 for 2D families");
        if (is3d && connectivity != 6) throw std::invalid_argument("world: room3d requires connectivity 6");
        if (!is3d && connectivity != 4 && connectivity != 8) {
            throw std::invalid_argument("world: 2D connectivity must be 4 or 8");
        }
    } else if (source.empty()) {
        throw std::invalid_argument("world: family 'file' needs a source graph");
    }
    if (train < 1 || val < 1 || test < 1) throw std::invalid_argument("world: split counts must be >= 1");
    if (problems_per_graph < 1) throw std::invalid_argument("world: problems_per_graph must be >= 1");
    if (!(density_min >= 0 && density_min <= density_max && density_max < 1)) {
        throw std::invalid_argument("world: need 0 <= density_min <= density_max < 1");
    }
    if (obstacle_min < 1 || obstacle_max < obstacle_min) throw std::invalid_argument("world: bad obstacle size range");
    if (wall_spacing < 2 || wall_jitter < 0 || gap_width < 1) throw std::invalid_argument("world: bad wall parameters");
    if (bugtraps_min < 1 || bugtraps_max < bugtraps_min) throw std::invalid_argument("world: bad bugtrap count range");
    if (blocks < 0 || block_size < 1) throw std::invalid_argument("world: bad room block parameters");
}

nlohmann::ordered_json spec_to_json(const WorldSpec& s) {
    return {
        {"family", to_string(s.family)},
        {"width", s.width},
        {"height", s.height},
        {"depth", s.depth},
        {"connectivity", s.connectivity},
        {"seed", s.seed},
        {"train", s.train},
        {"val", s.val},
        {"test", s.test},
        {"start_goal_policy", to_string(s.policy)},
        {"problems_per_graph", s.problems_per_graph},
        {"density_min", s.density_min},
        {"density_max", s.density_max},
        {"obstacle_min", s.obstacle_min},
        {"obstacle_max", s.obstacle_max},
        {"wall_spacing", s.wall_spacing},
        {"wall_jitter", s.wall_jitter},
        {"gap_width", s.gap_width},
        {"bugtraps_min", s.bugtraps_min},
        {"bugtraps_max", s.bugtraps_max},
        {"blocks", s.blocks},
        {"block_size", s.block_size},
        {"source", s.source},
    };
}

WorldSpec spec_from_json(const nlohmann::json& j) {
    WorldSpec s;
    reject_unknown_keys(j, key_set(spec_to_json(s)), "world spec");
    try {
        if (j.contains("family")) s.family = parse_world_family(j.at("family").get<std::string>());
        if (s.family == WorldFamily::Room3d) {
            s.depth = 20;
            s.connectivity = 6;
        }
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        get("width", s.width);
        get("height", s.height);
        get("depth", s.depth);
        get("connectivity", s.connectivity);
        get("seed", s.seed);
        get("train", s.train);
        get("val", s.val);
        get("test", s.test);
        if (j.contains("start_goal_policy")) s.policy = parse_start_goal_policy(j.at("start_goal_policy").get<std::string>());
        get("problems_per_graph", s.problems_per_graph);
        get("density_min", s.density_min);
        get("density_max", s.density_max);
        get("obstacle_min", s.obstacle_min);
        get("obstacle_max", s.obstacle_max);
        get("wall_spacing", s.wall_spacing);
        get("wall_jitter", s.wall_jitter);
        get("gap_width", s.gap_width);
        get("bugtraps_min", s.bugtraps_min);
        get("bugtraps_max", s.bugtraps_max);
        get("blocks", s.blocks);
        get("block_size", s.block_size);
        get("source", s.source);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("world spec: ") + e.what());
    }
    if (s.family == WorldFamily::File && !j.contains("start_goal_policy")) s.policy = StartGoalPolicy::UniformRandom;
    s.validate();
    return s;
}

// ---------------------------------------------------------------------------
// Occupancy and grid graphs

void Occupancy::fill_box(int x0, int y0, int z0, int x1, int y1, int z1, bool b) {
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    z0 = std::max(z0, 0);
    x1 = std::min(x1, width - 1);
    y1 = std::min(y1, height - 1);
    z1 = std::min(z1, depth - 1);
    for (int z = z0; z <= z1; ++z)
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) set(x, y, z, b);
}

std::size_t Occupancy::free_count() const {
    return static_cast<std::size_t>(std::count(blocked.begin(), blocked.end(), std::uint8_t(0)));
}

Graph grid_graph(const Occupancy& occ, int connectivity, std::map<std::string, std::string> metadata) {
    const bool is3d = occ.depth > 1;
    if (is3d ? connectivity != 6 : (connectivity != 4 && connectivity != 8)) {
        throw std::invalid_argument("grid_graph: unsupported connectivity " + std::to_string(connectivity));
    }
    std::vector<NodeId> id(occ.blocked.size(), -1);
    std::vector<double> features;
    NodeId next = 0;
    for (int z = 0; z < occ.depth; ++z)
        for (int y = 0; y < occ.height; ++y)
            for (int x = 0; x < occ.width; ++x) {
                if (occ.is_blocked(x, y, z)) continue;
                id[occ.index(x, y, z)] = next++;
                features.push_back(x);
                features.push_back(y);
                if (is3d) features.push_back(z);
            }

    auto free_at = [&](int x, int y, int z) { return occ.in_bounds(x, y, z) && !occ.is_blocked(x, y, z); };
    std::vector<EdgeSpec> edges;
    for (int z = 0; z < occ.depth; ++z)
        for (int y = 0; y < occ.height; ++y)
            for (int x = 0; x < occ.width; ++x) {
                if (!free_at(x, y, z)) continue;
                const NodeId a = id[occ.index(x, y, z)];
                auto link = [&](int nx, int ny, int nz) {
                    if (free_at(nx, ny, nz)) edges.push_back({a, id[occ.index(nx, ny, nz)], {}});
                };
                link(x + 1, y, z);
                link(x, y + 1, z);
                if (is3d) link(x, y, z + 1);
                if (connectivity == 8) {
                    if (free_at(x + 1, y, z) && free_at(x, y + 1, z)) link(x + 1, y + 1, z);
                    if (free_at(x - 1, y, z) && free_at(x, y + 1, z)) link(x - 1, y + 1, z);
                }
            }

    metadata["width"] = std::to_string(occ.width);
    metadata["height"] = std::to_string(occ.height);
    metadata["depth"] = std::to_string(occ.depth);
    metadata["connectivity"] = std::to_string(connectivity);
    return Graph(static_cast<std::size_t>(next), is3d ? 3 : 2, std::move(features), 0, edges, std::move(metadata));
}

NodeId GridInfo::node_at(int x, int y, int z) const {
    if (x < 0 || y < 0 || z < 0 || x >= width || y >= height || z >= depth) return -1;
    return cell_node[index(x, y, z)];
}

Occupancy GridInfo::occupancy() const {
    Occupancy occ(width, height, depth);
    for (std::size_t i = 0; i < cell_node.size(); ++i) occ.blocked[i] = cell_node[i] < 0 ? 1 : 0;
    return occ;
}

bool has_grid_metadata(const Graph& graph) {
    return !graph.meta("width").empty() && !graph.meta("height").empty() && !graph.meta("connectivity").empty();
}

GridInfo grid_info(const Graph& graph) {
    if (!has_grid_metadata(graph)) throw std::runtime_error("graph has no grid metadata");
    GridInfo info;
    try {
        info.width = std::stoi(graph.meta("width"));
        info.height = std::stoi(graph.meta("height"));
        info.depth = std::stoi(graph.meta("depth", "1"));
        info.connectivity = std::stoi(graph.meta("connectivity"));
    } catch (const std::exception&) {
        throw std::runtime_error("graph has malformed grid metadata");
    }
    const std::size_t dims = info.depth > 1 ? 3 : 2;
    if (info.width <= 0 || info.height <= 0 || info.depth <= 0 || graph.node_dim() < dims) {
        throw std::runtime_error("graph has malformed grid metadata");
    }
    info.cell_node.assign(std::size_t(info.width) * info.height * info.depth, -1);
    for (NodeId v = 0; v < static_cast<NodeId>(graph.node_count()); ++v) {
        auto f = graph.features(v);
        const int x = static_cast<int>(std::lround(f[0]));
        const int y = static_cast<int>(std::lround(f[1]));
        const int z = dims == 3 ? static_cast<int>(std::lround(f[2])) : 0;
        if (x < 0 || y < 0 || z < 0 || x >= info.width || y >= info.height || z >= info.depth) {
            throw std::runtime_error("node " + std::to_string(v) + " lies outside the grid");
        }
        info.cell_node[info.index(x, y, z)] = v;
    }
    return info;
}

std::array<int, 3> grid_coords(const Graph& graph, NodeId v) {
    auto f = graph.features(v);
    return {static_cast<int>(std::lround(f[0])), f.size() > 1 ? static_cast<int>(std::lround(f[1])) : 0,
            f.size() > 2 ? static_cast<int>(std::lround(f[2])) : 0};
}

// ---------------------------------------------------------------------------
// Generation

std::uint64_t instance_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

Occupancy generate_occupancy(const WorldSpec& spec, std::mt19937_64& rng) {
    Occupancy occ(spec.width, spec.height, spec.family == WorldFamily::Room3d ? spec.depth : 1);
    switch (spec.family) {
        case WorldFamily::AlternatingGaps: add_alternating_walls(occ, spec, rng); break;
        case WorldFamily::SingleBugtrap: add_single_bugtrap(occ, rng); break;
        case WorldFamily::ShiftingGaps: add_shifting_walls(occ, spec, rng); break;
        case WorldFamily::Forest: add_forest(occ, spec, spec.density_min, spec.density_max, rng); break;
        case WorldFamily::BugtrapForest:
            add_forest(occ, spec, spec.density_min / 2, spec.density_max / 2, rng);
            add_single_bugtrap(occ, rng);
            break;
        case WorldFamily::GapsForest:
            add_forest(occ, spec, spec.density_min / 2, spec.density_max / 2, rng);
            add_alternating_walls(occ, spec, rng);
            break;
        case WorldFamily::Mazes: divide(occ, 0, 0, occ.width - 1, occ.height - 1, rng); break;
        case WorldFamily::MultipleBugtraps: add_multiple_bugtraps(occ, spec, rng); break;
        case WorldFamily::Room3d: add_room_blocks(occ, spec, rng); break;
        case WorldFamily::File: throw std::invalid_argument("generate_occupancy: 'file' worlds are loaded, not drawn");
    }
    return occ;
}

Graph generate_instance(const WorldSpec& spec, std::uint64_t stream, std::uint64_t index) {
    const std::uint64_t seed = instance_seed(spec.seed, stream, index);
    std::mt19937_64 rng(seed);
    const auto corner = far_corner(spec);
    const int z1 = spec.family == WorldFamily::Room3d ? corner[2] : 0;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Occupancy occ = generate_occupancy(spec, rng);
        occ.set(0, 0, 0, false);
        occ.set(corner[0], corner[1], z1, false);
        Graph g = grid_graph(occ, spec.connectivity,
                             {{"family", to_string(spec.family)},
                              {"seed", std::to_string(seed)},
                              {"index", std::to_string(index)}});
        GridInfo info = grid_info(g);
        const NodeId s = info.node_at(0, 0, 0), t = info.node_at(corner[0], corner[1], z1);
        if (shortest_path_length(g, s, t) != DistanceField::kUnreachable) return g;
    }
    throw std::runtime_error("world: no connected " + to_string(spec.family) + " instance after " +
                             std::to_string(kMaxAttempts) + " attempts");
}

std::vector<Problem> make_problems(const Graph& graph, StartGoalPolicy policy, int count, std::uint64_t seed,
                                   const std::string& graph_name) {
    std::vector<Problem> out;
    if (count <= 0 || graph.node_count() == 0) return out;
    if (policy == StartGoalPolicy::FixedCorners) {
        GridInfo info = grid_info(graph);
        const NodeId s = info.node_at(0, 0, 0);
        const NodeId t = info.node_at(info.width - 1, info.height - 1, info.depth - 1);
        if (s < 0 || t < 0) throw std::runtime_error("make_problems: a grid corner is blocked");
        if (shortest_path_length(graph, s, t) == DistanceField::kUnreachable) {
            throw std::runtime_error("make_problems: corners are not connected");
        }
        out.push_back({graph_name, s, t});
        return out;
    }
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<NodeId> pick(0, static_cast<NodeId>(graph.node_count()) - 1);
    for (int i = 0; i < count; ++i) {
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            const NodeId s = pick(rng);
            DistanceField field = distances_from(graph, s);
            std::vector<NodeId> reachable;
            for (NodeId v = 0; v < static_cast<NodeId>(graph.node_count()); ++v) {
                if (v != s && field.reachable(v)) reachable.push_back(v);
            }
            if (reachable.empty()) continue;
            const NodeId t = reachable[std::uniform_int_distribution<std::size_t>(0, reachable.size() - 1)(rng)];
            out.push_back({graph_name, s, t});
            placed = true;
        }
        if (!placed) throw std::runtime_error("make_problems: no connected start-goal pair found");
    }
    return out;
}

void write_occupancy_pgm(const Occupancy& occ, std::ostream& out) {
    for (int z = 0; z < occ.depth; ++z) {
        out << "P2\n" << occ.width << ' ' << occ.height << "\n255\n";
        for (int y = occ.height - 1; y >= 0; --y) {
            for (int x = 0; x < occ.width; ++x) out << (x ? " " : "") << (occ.is_blocked(x, y, z) ? 0 : 255);
            out << '\n';
        }
    }
}

void write_problems(const std::vector<Problem>& problems, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["problems"] = nlohmann::ordered_json::array();
    for (const auto& p : problems) j["problems"].push_back({{"graph", p.graph}, {"start", p.start}, {"goal", p.goal}});
    write_json_file(j, path);
}

std::vector<Problem> read_problems(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<Problem> out;
    try {
        auto j = nlohmann::json::parse(in);
        for (const auto& p : j.at("problems")) {
            out.push_back({p.at("graph").get<std::string>(), p.at("start").get<NodeId>(), p.at("goal").get<NodeId>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(path.string() + ": " + e.what());
    }
    return out;
}

void generate_dataset(const WorldSpec& spec, const std::filesystem::path& dir) {
    spec.validate();
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    write_json_file(spec_to_json(spec), dir / "spec.json");
    const std::pair<const char*, int> splits[] = {{"train", spec.train}, {"val", spec.val}, {"test", spec.test}};
    std::uint64_t stream = 0;
    for (const auto& [name, count] : splits) {
        const fs::path split = dir / name;
        fs::create_directories(split);
        std::vector<Problem> problems;
        if (spec.family == WorldFamily::File) {
            Graph g = load_graph(spec.source);
            const std::string file = "graph_0000.graph";
            save_graph(g, split / file);
            problems = make_problems(g, spec.policy, count, instance_seed(spec.seed, stream, 0), file);
        } else {
            for (int i = 0; i < count; ++i) {
                Graph g = generate_instance(spec, stream, static_cast<std::uint64_t>(i));
                std::ostringstream stem;
                stem << "graph_" << std::setw(4) << std::setfill('0') << i;
                save_graph(g, split / (stem.str() + ".graph"));
                {
                    std::ofstream pgm(split / (stem.str() + ".pgm"));
                    write_occupancy_pgm(grid_info(g).occupancy(), pgm);
                }
                auto ps = make_problems(g, spec.policy, spec.problems_per_graph,
                                        instance_seed(spec.seed, stream + 100, static_cast<std::uint64_t>(i)),
                                        stem.str() + ".graph");
                problems.insert(problems.end(), ps.begin(), ps.end());
            }
        }
        write_problems(problems, split / "problems.json");
        ++stream;
    }
}

std::size_t SplitData::graph_index(const Problem& p) const {
    auto it = std::find(names.begin(), names.end(), p.graph);
    if (it == names.end()) throw std::runtime_error("problem references unknown graph '" + p.graph + "'");
    return static_cast<std::size_t>(it - names.begin());
}

SplitData load_split(const std::filesystem::path& dir) {
    SplitData data;
    data.problems = read_problems(dir / "problems.json");
    for (const auto& p : data.problems) {
        if (std::find(data.names.begin(), data.names.end(), p.graph) != data.names.end()) continue;
        data.names.push_back(p.graph);
        data.graphs.push_back(load_graph(dir / p.graph));
    }
    for (const auto& p : data.problems) {
        const Graph& g = data.graphs[data.graph_index(p)];
        if (!g.valid(p.start) || !g.valid(p.goal)) {
            throw std::runtime_error(dir.string() + ": problem on " + p.graph + " has an invalid node id");
        }
    }
    return data;
}

double default_target_scale(const Graph& graph) {
    if (has_grid_metadata(graph)) {
        GridInfo info = grid_info(graph);
        return static_cast<double>(std::max({info.width, info.height, info.depth}));
    }
    if (graph.node_count() == 0) return 1.0;
    auto farthest = [&](NodeId from) {
        DistanceField f = distances_from(graph, from);
        NodeId best = from;
        for (NodeId v = 0; v < static_cast<NodeId>(f.dist.size()); ++v) {
            if (f.reachable(v) && f.dist[v] > f.dist[best]) best = v;
        }
        return std::make_pair(best, f.dist[best]);
    };
    const auto [a, da] = farthest(0);
    const auto [b, db] = farthest(a);
    (void)da;
    (void)b;
    return std::max(1.0, static_cast<double>(db));
}

double default_input_scale(const Graph& graph) {
    double scale = 0.0;
    for (const auto& [lo, hi] : graph.feature_bounds()) scale = std::max({scale, std::abs(lo), std::abs(hi)});
    return scale > 0.0 && std::isfinite(scale) ? scale : 1.0;
}

}  // namespace phil
