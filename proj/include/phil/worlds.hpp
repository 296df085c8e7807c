#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "phil/graph.hpp"

namespace phil {

enum class WorldFamily {
    AlternatingGaps,
    SingleBugtrap,
    ShiftingGaps,
    Forest,
    BugtrapForest,
    GapsForest,
    Mazes,
    MultipleBugtraps,
    Room3d,
    File,
};

std::string to_string(WorldFamily f);
WorldFamily parse_world_family(const std::string& name);

enum class StartGoalPolicy { FixedCorners, UniformRandom };

std::string to_string(StartGoalPolicy p);
StartGoalPolicy parse_start_goal_policy(const std::string& name);

/// Everything needed to regenerate a dataset bit for bit.
struct WorldSpec {
    WorldFamily family = WorldFamily::AlternatingGaps;
    int width = 40;
    int height = 40;
    int depth = 1;
    int connectivity = 4;  // 4 or 8 in 2D, 6 in 3D
    std::uint64_t seed = 0;
    int train = 200;
    int val = 10;
    int test = 100;
    StartGoalPolicy policy = StartGoalPolicy::FixedCorners;
    int problems_per_graph = 1;

    // Family parameters; the original generators are unpublished, so these are tunable.
    double density_min = 0.1;  // forest clutter fraction range
    double density_max = 0.3;
    int obstacle_min = 2;      // forest square side range
    int obstacle_max = 4;
    int wall_spacing = 10;     // rows between gap walls
    int wall_jitter = 1;
    int gap_width = 1;
    int bugtraps_min = 2;
    int bugtraps_max = 4;
    int blocks = 5;            // room3d removed blocks
    int block_size = 5;
    std::string source;        // graph file for the `file` family

    void validate() const;
};

nlohmann::ordered_json spec_to_json(const WorldSpec& spec);
/// Strict: unknown keys raise std::invalid_argument naming the key.
WorldSpec spec_from_json(const nlohmann::json& j);

/// Dense 2D/3D occupancy grid; blocked cells are obstacles.
struct Occupancy {
    int width = 0;
    int height = 0;
    int depth = 1;
    std::vector<std::uint8_t> blocked;

    Occupancy() = default;
    Occupancy(int w, int h, int d = 1) : width(w), height(h), depth(d), blocked(std::size_t(w) * h * d, 0) {}

    bool in_bounds(int x, int y, int z = 0) const {
        return x >= 0 && y >= 0 && z >= 0 && x < width && y < height && z < depth;
    }
    std::size_t index(int x, int y, int z = 0) const { return (std::size_t(z) * height + y) * width + x; }
    bool is_blocked(int x, int y, int z = 0) const { return blocked[index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool b) { blocked[index(x, y, z)] = b ? 1 : 0; }
    /// Blocks the axis-aligned box [x0, x1] x [y0, y1] x [z0, z1], clamped to bounds.
    void fill_box(int x0, int y0, int z0, int x1, int y1, int z1, bool b = true);
    std::size_t free_count() const;
};

/// Free cells become nodes (ids in z, y, x scan order) with their integer
/// coordinates as features. 8-connected diagonal moves require both adjacent
/// orthogonal cells to be free.
Graph grid_graph(const Occupancy& occ, int connectivity, std::map<std::string, std::string> metadata = {});

/// Grid layout recovered from a graph's metadata and coordinate features.
struct GridInfo {
    int width = 0;
    int height = 0;
    int depth = 1;
    int connectivity = 4;
    std::vector<NodeId> cell_node;  // -1 for obstacles

    bool is_3d() const { return depth > 1; }
    std::size_t index(int x, int y, int z = 0) const { return (std::size_t(z) * height + y) * width + x; }
    NodeId node_at(int x, int y, int z = 0) const;
    Occupancy occupancy() const;
};

bool has_grid_metadata(const Graph& graph);
/// Throws std::runtime_error if the graph carries no grid metadata.
GridInfo grid_info(const Graph& graph);
std::array<int, 3> grid_coords(const Graph& graph, NodeId v);

/// Draws one occupancy grid of the spec's family (corners not yet cleared).
Occupancy generate_occupancy(const WorldSpec& spec, std::mt19937_64& rng);

/// Deterministic per-instance stream: independent of generation order.
std::uint64_t instance_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index);

struct Problem {
    std::string graph;  // file name relative to the split directory
    NodeId start = -1;
    NodeId goal = -1;
};

/// Start-goal pairs on one graph. Fixed corners yields at most one pair, from the
/// bottom-left to the top-right grid cell. Uniform draws `count` connected pairs
/// with start != goal whenever the component allows it.
std::vector<Problem> make_problems(const Graph& graph, StartGoalPolicy policy, int count, std::uint64_t seed,
                                   const std::string& graph_name = "");

/// One generated grid instance: retries occupancy draws (up to 100) until the
/// fixed corners are connected.
Graph generate_instance(const WorldSpec& spec, std::uint64_t stream, std::uint64_t index);

/// Writes train/, val/ and test/ with graph_XXXX.{graph,json,pgm} and problems.json,
/// plus spec.json at the top level.
void generate_dataset(const WorldSpec& spec, const std::filesystem::path& dir);

struct SplitData {
    std::vector<std::string> names;
    std::vector<Graph> graphs;
    std::vector<Problem> problems;

    /// Index into `graphs` of a problem's graph.
    std::size_t graph_index(const Problem& p) const;
};

SplitData load_split(const std::filesystem::path& dir);
void write_problems(const std::vector<Problem>& problems, const std::filesystem::path& path);
std::vector<Problem> read_problems(const std::filesystem::path& path);

/// Occupancy as PGM P2 (obstacles 0, free 255), y growing upward. 3D worlds
/// are written as consecutive per-layer images in one file.
void write_occupancy_pgm(const Occupancy& occ, std::ostream& out);

/// Default target scale: longest grid side, or a BFS diameter estimate.
double default_target_scale(const Graph& graph);
/// Default input scale: largest absolute node-feature value (1 if all are zero).
double default_input_scale(const Graph& graph);

}  // namespace phil
