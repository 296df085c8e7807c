#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

using namespace phil;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

nlohmann::json read_json(const fs::path& p) {
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

struct Workspace {
    fs::path root = fs::temp_directory_path() / "phil_cli_test";
    Workspace() {
        fs::remove_all(root);
        fs::create_directories(root);
    }
    ~Workspace() { fs::remove_all(root); }
    std::string operator/(const std::string& rel) const { return (root / rel).string(); }
    std::string write(const std::string& name, const std::string& text) const {
        std::ofstream(root / name) << text;
        return (root / name).string();
    }
};

}  // namespace

TEST_SUITE("cli") {
    TEST_CASE("help lists every subcommand and exits 0") {
        Run r = cli({"--help"});
        CHECK(r.code == kExitOk);
        for (const char* cmd : {"gen", "oracle", "search", "train", "eval", "render", "selfcheck"}) {
            CHECK(r.out.find(cmd) != std::string::npos);
        }
    }

    TEST_CASE("usage errors exit 2") {
        CHECK(cli({}).code == kExitConfig);
        CHECK(cli({"frobnicate"}).code == kExitConfig);
        CHECK(cli({"gen", "--width", "wide"}).code == kExitConfig);
    }

    TEST_CASE("unknown config keys are rejected by name") {
        Workspace ws;
        for (std::string cmd : {"gen", "train", "eval", "search", "selfcheck"}) {
            const std::string cfg = ws.write(cmd + ".json", "{\"bogus_key\": 1}");
            Run r = cli({"-o", ws / "out", cmd, "-c", cfg});
            CAPTURE(cmd);
            CHECK(r.code == kExitConfig);
            CHECK(r.err.find("bogus_key") != std::string::npos);
        }
        const std::string broken = ws.write("broken.json", "{\"width\": ");
        CHECK(cli({"-o", ws / "out", "gen", "-c", broken}).code == kExitConfig);
        CHECK(cli({"-o", ws / "out", "gen", "-c", ws / "missing.json"}).code == kExitConfig);
        const std::string invalid = ws.write("invalid.json", "{\"width\": 3}");
        Run r = cli({"-o", ws / "out", "gen", "-c", invalid});
        CHECK(r.code == kExitConfig);
    }

    TEST_CASE("end to end: gen, oracle, search, render, train, eval") {
        Workspace ws;
        const std::string out = ws / "out";
        const std::string ds = ws / "ds";
        Run gen = cli({"-o", out, "gen", "--width", "12", "--height", "12", "--train", "2", "--val", "1", "--test", "2",
                       "-d", ds});
        REQUIRE(gen.code == kExitOk);
        auto snap = read_json(fs::path(out) / "gen.resolved.json");
        CHECK(snap["width"] == 12);
        CHECK(snap["family"] == "alternating_gaps");
        CHECK(snap.contains("wall_spacing"));
        CHECK(snap.contains("seed"));
        CHECK(fs::exists(fs::path(ds) / "train" / "problems.json"));
        CHECK(fs::exists(fs::path(ds) / "spec.json"));

        const std::string graph = (fs::path(ds) / "test" / "graph_0000.graph").string();
        Run oracle = cli({"-o", out, "oracle", "-w", graph, "--goal", "0", "--format", "csv", "--output", ws / "d.csv"});
        CHECK(oracle.code == kExitOk);
        std::ifstream csv(ws / "d.csv");
        std::string header;
        std::getline(csv, header);
        CHECK(header == "node,distance");

        Run search = cli({"-o", out, "search", "-w", graph, "--start", "0", "--goal", "5", "-a", "bfs", "--log",
                          ws / "log.json", "--render", ws / "s.pgm"});
        CHECK(search.code == kExitOk);
        auto log = read_json(ws / "log.json");
        CHECK(log["found"] == true);
        CHECK(log["algo"] == "bfs");
        CHECK(fs::exists(ws / "s.pgm"));
        CHECK(read_json(fs::path(out) / "search.resolved.json")["budget"] == 0);

        Run render = cli({"-o", out, "render", "-w", graph, "--log", ws / "log.json", "--output", ws / "r.pgm"});
        CHECK(render.code == kExitOk);
        std::ifstream a(ws / "s.pgm"), b(ws / "r.pgm");
        std::stringstream sa, sb;
        sa << a.rdbuf();
        sb << b.rdbuf();
        CHECK(sa.str() == sb.str());

        Run bad_node = cli({"-o", out, "search", "-w", graph, "--start", "100000", "--goal", "5"});
        CHECK(bad_node.code != kExitOk);
        Run missing_model = cli({"-o", out, "search", "-w", graph, "--start", "0", "--goal", "5", "-a", "phil"});
        CHECK(missing_model.code == kExitConfig);

        const std::string tcfg = ws.write("train.json",
                                          "{\"N\": 1, \"m\": 1, \"T\": 16, \"t_tau\": 4, \"mlp_depth\": 2, \"mlp_width\": 8,"
                                          " \"emb\": 8, \"memory\": 4, \"epochs\": 1, \"val_problems\": 1}");
        Run train = cli({"-o", ws / "train", "--verbosity", "0", "train", "-d", ds, "-c", tcfg});
        REQUIRE(train.code == kExitOk);
        CHECK(fs::exists(ws / "train/model.json"));
        CHECK(fs::exists(ws / "train/train_log.csv"));
        CHECK(fs::exists(ws / "train/checkpoints/iter_0000.json"));
        CHECK(fs::exists(ws / "train/checkpoints/iter_0001.json"));
        auto tsnap = read_json(ws / "train/train.resolved.json");
        CHECK(tsnap["N"] == 1);
        CHECK(tsnap["beta0"] == 0.7);
        CHECK(tsnap["aggregation"] == "softmax");

        Run eval = cli({"-o", ws / "eval", "eval", "-d", ds, "-a", "learned=phil:" + (ws / "train/model.json"), "-a",
                        "oracle", "-a", "bfs", "--no-timing"});
        CHECK(eval.code == kExitOk);
        CHECK(eval.out.find("| learned |") != std::string::npos);
        for (const char* f : {"results.csv", "results.json", "results.md", "eval.resolved.json"}) {
            CHECK(fs::exists(fs::path(ws / "eval") / f));
        }
        auto esnap = read_json(ws / "eval/eval.resolved.json");
        CHECK(esnap["reference"] == "astar_euclidean");
        CHECK(esnap["timing"] == false);
    }

    TEST_CASE("the output directory defaults to the environment variable") {
        Workspace ws;
        ::setenv(kOutputDirEnv, (ws / "from_env").c_str(), 1);
        Run r = cli({"selfcheck"});
        ::unsetenv(kOutputDirEnv);
        CHECK(r.code == kExitOk);
        CHECK(fs::exists(fs::path(ws / "from_env") / "selfcheck.resolved.json"));
        CHECK(r.out.find("FAIL") == std::string::npos);
    }

    TEST_CASE("explicit flags override config values") {
        Workspace ws;
        const std::string cfg = ws.write("gen.json", "{\"width\": 20, \"height\": 10, \"train\": 1, \"val\": 1, \"test\": 1}");
        Run r = cli({"-o", ws / "o", "gen", "-c", cfg, "--width", "9", "-d", ws / "ds"});
        REQUIRE(r.code == kExitOk);
        auto snap = read_json(ws / "o/gen.resolved.json");
        CHECK(snap["width"] == 9);
        CHECK(snap["height"] == 10);
    }
}
