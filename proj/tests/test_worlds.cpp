#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "phil/oracle.hpp"
#include "phil/worlds.hpp"

using namespace phil;
using namespace phil::testing;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::map<std::string, std::string> tree_contents(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

WorldSpec small_spec(WorldFamily family) {
    WorldSpec s;
    s.family = family;
    s.width = 24;
    s.height = 24;
    s.train = 3;
    s.val = 1;
    s.test = 2;
    if (family == WorldFamily::Room3d) {
        s.depth = 10;
        s.connectivity = 6;
        s.block_size = 3;
    }
    return s;
}

}  // namespace

TEST_SUITE("worlds") {
    TEST_CASE("grid nodes carry their integer coordinates and scan order ids") {
        std::mt19937_64 rng(1);
        Occupancy occ = random_occupancy(rng, 9, 11, 0.3);
        for (int connectivity : {4, 8}) {
            Graph g = grid_graph(occ, connectivity);
            CHECK(g.node_count() == occ.free_count());
            NodeId id = 0;
            for (int y = 0; y < occ.height; ++y) {
                for (int x = 0; x < occ.width; ++x) {
                    if (occ.is_blocked(x, y)) continue;
                    auto f = g.features(id);
                    CHECK(f[0] == double(x));
                    CHECK(f[1] == double(y));
                    ++id;
                }
            }
            for (const auto& e : g.edge_list()) {
                auto a = g.features(e.a), b = g.features(e.b);
                const double dx = std::abs(a[0] - b[0]), dy = std::abs(a[1] - b[1]);
                CHECK(std::max(dx, dy) == 1.0);
                if (connectivity == 4) CHECK(dx + dy == 1.0);
                if (dx + dy == 2.0) {
                    CHECK_FALSE(occ.is_blocked(int(a[0]), int(b[1])));
                    CHECK_FALSE(occ.is_blocked(int(b[0]), int(a[1])));
                }
            }
        }
    }

    TEST_CASE("grid metadata round trip") {
        std::mt19937_64 rng(2);
        Occupancy occ = random_occupancy(rng, 12, 10, 0.2);
        Graph g = grid_graph(occ, 8, {{"family", "test"}});
        REQUIRE(has_grid_metadata(g));
        GridInfo info = grid_info(g);
        CHECK(info.width == 12);
        CHECK(info.height == 10);
        CHECK(info.connectivity == 8);
        CHECK(info.occupancy().blocked == occ.blocked);
        CHECK(info.node_at(0, 0) == 0);
        CHECK_FALSE(has_grid_metadata(path_graph(3)));
        CHECK_THROWS_AS(grid_info(path_graph(3)), std::runtime_error);
    }

    TEST_CASE("alternating gaps: every wall row has exactly one free cell on alternating edges") {
        WorldSpec spec = small_spec(WorldFamily::AlternatingGaps);
        spec.width = 40;
        spec.height = 40;
        for (std::uint64_t i = 0; i < 30; ++i) {
            Graph g = generate_instance(spec, 0, i);
            Occupancy occ = grid_info(g).occupancy();
            int walls = 0;
            int last_side = -1;
            for (int y = 0; y < occ.height; ++y) {
                int free = 0, free_x = -1;
                for (int x = 0; x < occ.width; ++x) {
                    if (!occ.is_blocked(x, y)) {
                        ++free;
                        free_x = x;
                    }
                }
                if (free == occ.width) continue;
                ++walls;
                REQUIRE(free == 1);
                const int side = free_x == 0 ? 0 : 1;
                CHECK((free_x == 0 || free_x == occ.width - 1));
                if (last_side >= 0) CHECK(side != last_side);
                last_side = side;
            }
            CHECK(walls >= 2);
        }
    }

    TEST_CASE("every family yields corner-connected instances") {
        for (WorldFamily family : {WorldFamily::AlternatingGaps, WorldFamily::SingleBugtrap, WorldFamily::ShiftingGaps,
                                   WorldFamily::Forest, WorldFamily::BugtrapForest, WorldFamily::GapsForest,
                                   WorldFamily::Mazes, WorldFamily::MultipleBugtraps, WorldFamily::Room3d}) {
            CAPTURE(to_string(family));
            WorldSpec spec = small_spec(family);
            const int seeds = family == WorldFamily::Forest ? 50 : 5;
            for (int i = 0; i < seeds; ++i) {
                Graph g = generate_instance(spec, 0, std::uint64_t(i));
                GridInfo info = grid_info(g);
                const NodeId s = info.node_at(0, 0, 0), t = info.node_at(info.width - 1, info.height - 1, info.depth - 1);
                REQUIRE(s >= 0);
                REQUIRE(t >= 0);
                CHECK(shortest_path_length(g, s, t) != DistanceField::kUnreachable);
                CHECK(g.node_count() < std::size_t(info.width * info.height * info.depth));
            }
        }
    }

    TEST_CASE("forest clutter density stays in the configured range") {
        WorldSpec spec = small_spec(WorldFamily::Forest);
        spec.width = 40;
        spec.height = 40;
        for (int i = 0; i < 50; ++i) {
            std::mt19937_64 rng{std::uint64_t(i)};
            Occupancy occ = generate_occupancy(spec, rng);
            const double density = 1.0 - double(occ.free_count()) / 1600.0;
            CHECK(density >= 0.05);
            CHECK(density <= spec.density_max + 0.05);
        }
    }

    TEST_CASE("room3d node count is the volume minus the removed blocks") {
        WorldSpec spec = small_spec(WorldFamily::Room3d);
        spec.width = 20;
        spec.height = 20;
        spec.depth = 10;
        spec.blocks = 3;
        spec.block_size = 3;
        for (int i = 0; i < 10; ++i) {
            std::mt19937_64 rng{std::uint64_t(i)};
            Occupancy occ = generate_occupancy(spec, rng);
            const std::size_t blocked = std::size_t(std::count(occ.blocked.begin(), occ.blocked.end(), 1));
            CHECK(blocked > 0);
            CHECK(blocked <= 3 * 27);
            CHECK(grid_graph(occ, 6).node_count() == 20 * 20 * 10 - blocked);
        }
    }

    TEST_CASE("problem sets") {
        Graph g = grid_graph(Occupancy(12, 9, 1), 4);
        auto fixed = make_problems(g, StartGoalPolicy::FixedCorners, 5, 0);
        REQUIRE(fixed.size() == 1);
        CHECK(g.features(fixed[0].start)[0] == 0);
        CHECK(g.features(fixed[0].start)[1] == 0);
        CHECK(g.features(fixed[0].goal)[0] == 11);
        CHECK(g.features(fixed[0].goal)[1] == 8);
        CHECK(make_problems(g, StartGoalPolicy::UniformRandom, 0, 0).empty());

        std::mt19937_64 rng(4);
        Graph r = random_graph(rng, 60, 0.03);
        auto random = make_problems(r, StartGoalPolicy::UniformRandom, 40, 9);
        CHECK(random.size() == 40);
        for (const auto& p : random) CHECK(shortest_path_length(r, p.start, p.goal) != DistanceField::kUnreachable);
    }

    TEST_CASE("world spec json is strict") {
        WorldSpec s = small_spec(WorldFamily::Mazes);
        auto j = spec_to_json(s);
        WorldSpec back = spec_from_json(j);
        CHECK(spec_to_json(back) == j);
        j["bogus"] = 1;
        CHECK_THROWS_WITH_AS(spec_from_json(j), doctest::Contains("bogus"), std::invalid_argument);
        WorldSpec tiny = s;
        tiny.width = 7;
        CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);
        tiny = s;
        tiny.test = 0;
        CHECK_THROWS_AS(tiny.validate(), std::invalid_argument);
    }

    TEST_CASE("dataset generation is byte-reproducible and every problem is solvable") {
        TempDir a("phil_worlds_a"), b("phil_worlds_b");
        WorldSpec spec = small_spec(WorldFamily::GapsForest);
        spec.policy = StartGoalPolicy::UniformRandom;
        spec.problems_per_graph = 3;
        generate_dataset(spec, a.path);
        generate_dataset(spec, b.path);
        auto ta = tree_contents(a.path), tb = tree_contents(b.path);
        CHECK(ta.size() > 10);
        CHECK(ta == tb);
        for (const char* split : {"train", "val", "test"}) {
            SplitData data = load_split(a.path / split);
            CHECK(data.problems.size() == 3 * data.graphs.size());
            for (const auto& p : data.problems) {
                const Graph& g = data.graphs[data.graph_index(p)];
                CHECK(shortest_path_length(g, p.start, p.goal) != DistanceField::kUnreachable);
            }
        }
        CHECK(load_split(a.path / "train").graphs.size() == 3);
    }

    TEST_CASE("instance streams do not depend on generation order") {
        WorldSpec spec = small_spec(WorldFamily::Forest);
        Graph late = generate_instance(spec, 1, 7);
        generate_instance(spec, 1, 3);
        Graph again = generate_instance(spec, 1, 7);
        CHECK(late.node_feature_data() == again.node_feature_data());
        CHECK(instance_seed(0, 1, 7) != instance_seed(0, 2, 7));
    }

    TEST_CASE("graph files save and load with metadata") {
        TempDir dir("phil_worlds_io");
        Graph g = generate_instance(small_spec(WorldFamily::Mazes), 0, 0);
        save_graph(g, dir.path / "maze.graph");
        Graph back = load_graph(dir.path / "maze.graph");
        CHECK(back.node_feature_data() == g.node_feature_data());
        CHECK(back.metadata() == g.metadata());
        CHECK(back.edge_count() == g.edge_count());
    }

    TEST_CASE("occupancy pgm has one header per layer") {
        Occupancy occ(3, 2, 2);
        occ.set(0, 0, 1, true);
        std::ostringstream out;
        write_occupancy_pgm(occ, out);
        const std::string s = out.str();
        CHECK(std::count(s.begin(), s.end(), 'P') == 2);
        CHECK(s.rfind("P2\n3 2\n255\n", 0) == 0);
    }

    TEST_CASE("default scales") {
        Graph g = grid_graph(Occupancy(30, 12, 1), 4, {});
        CHECK(default_input_scale(g) == 29.0);
        Graph zero(2, 1, {0.0, 0.0}, 0, {{0, 1, {}}});
        CHECK(default_input_scale(zero) == 1.0);
        CHECK(default_target_scale(generate_instance(small_spec(WorldFamily::Forest), 0, 0)) == 24.0);
    }
}
