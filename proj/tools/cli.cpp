#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include <CLI11.hpp>

#include "phil/eval.hpp"
#include "phil/json_io.hpp"
#include "phil/oracle.hpp"
#include "phil/search.hpp"
#include "phil/selfcheck.hpp"
#include "phil/training.hpp"
#include "phil/worlds.hpp"

namespace phil {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

template <class F>
auto as_config(F&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    } catch (const std::out_of_range& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(e.what());
    }
}

struct Globals {
    std::uint64_t seed = 0;
    int threads = 1;
    int verbosity = 1;
    std::string out;
    CLI::Option* seed_opt = nullptr;
    CLI::Option* threads_opt = nullptr;

    fs::path output_dir() const {
        if (!out.empty()) return out;
        if (const char* env = std::getenv(kOutputDirEnv); env && *env) return env;
        return "phil_out";
    }
};

/// Collects the flags a user actually passed so they can be layered over a
/// JSON config file.
class Overrides {
public:
    explicit Overrides(CLI::App* app) : app_(app) {
        app_->add_option("-c,--config", config_, "JSON config file; explicit flags take precedence");
    }

    template <class T>
    CLI::Option* option(const std::string& flag, const std::string& key, T& storage, const std::string& help) {
        CLI::Option* opt = app_->add_option(flag, storage, help);
        collectors_.push_back([opt, key, &storage](ojson& j) {
            if (opt->count() > 0) j[key] = storage;
        });
        return opt;
    }

    CLI::Option* flag(const std::string& flag, const std::string& key, bool value, const std::string& help) {
        CLI::Option* opt = app_->add_flag(flag, help);
        collectors_.push_back([opt, key, value](ojson& j) {
            if (opt->count() > 0) j[key] = value;
        });
        return opt;
    }

    ojson merged(const Globals& g, bool takes_seed, bool takes_threads) const {
        ojson j = ojson::object();
        if (!config_.empty()) {
            try {
                j = read_json_file(config_);
            } catch (const std::exception& e) {
                throw ConfigError(e.what());
            }
            if (!j.is_object()) throw ConfigError(config_ + ": expected a JSON object");
        }
        if (takes_seed && g.seed_opt->count() > 0) j["seed"] = g.seed;
        if (takes_threads && g.threads_opt->count() > 0) j["threads"] = g.threads;
        for (const auto& collect : collectors_) collect(j);
        return j;
    }

private:
    CLI::App* app_;
    std::string config_;
    std::vector<std::function<void(ojson&)>> collectors_;
};

/// Layers `given` over `defaults`, rejecting keys the defaults do not declare.
ojson resolve(const ojson& defaults, const ojson& given, const std::string& what) {
    as_config([&] {
        reject_unknown_keys(given, key_set(defaults), what);
        return 0;
    });
    ojson out = defaults;
    for (auto it = given.begin(); it != given.end(); ++it) out[it.key()] = it.value();
    return out;
}

template <class T>
T field(const ojson& j, const char* key, const std::string& what) {
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError(what + ": '" + key + "' has the wrong type");
    }
}

std::string take_string(ojson& j, const char* key, const std::string& fallback) {
    std::string value = fallback;
    if (j.contains(key)) {
        value = as_config([&] { return j.at(key).get<std::string>(); });
        j.erase(key);
    }
    return value;
}

void write_snapshot(const ojson& resolved, const fs::path& dir, const std::string& command) {
    fs::create_directories(dir);
    write_json_file(resolved, dir / (command + ".resolved.json"));
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ConfigError(message);
}

NodeId checked_node(const Graph& g, std::int64_t id, const char* what) {
    require(id >= 0 && static_cast<std::size_t>(id) < g.node_count(),
            std::string(what) + " " + std::to_string(id) + " is not a node of the graph (" +
                std::to_string(g.node_count()) + " nodes)");
    return static_cast<NodeId>(id);
}

/// Shared by `search` and `render`: one algorithm on one problem.
struct SingleSearch {
    std::string world;
    std::int64_t start = -1;
    std::int64_t goal = -1;
    std::string algo = "astar_euclidean";
    std::string model;
    std::size_t budget = 0;
    std::size_t n = 4;
    std::uint64_t seed = 0;

    void add_options(Overrides& o) {
        o.option("-w,--world", "world", world, "graph file");
        o.option("--start", "start", start, "start node id");
        o.option("--goal", "goal", goal, "goal node id");
        o.option("-a,--algo", "algo", algo, "algorithm: " + CLI::detail::join(known_algorithms(), ", "));
        o.option("-m,--model", "model", model, "model file for phil and sl");
        o.option("-b,--budget", "budget", budget, "expansion budget, 0 for |V|");
        o.option("-n,--neighbors", "n", n, "sampled neighbors per node (phil)");
    }

    static ojson defaults() {
        SingleSearch s;
        return ojson{{"world", s.world}, {"start", s.start}, {"goal", s.goal},     {"algo", s.algo},
                     {"model", s.model}, {"budget", s.budget}, {"n", s.n}, {"seed", s.seed}};
    }

    void load(const ojson& j, const std::string& what) {
        world = field<std::string>(j, "world", what);
        start = field<std::int64_t>(j, "start", what);
        goal = field<std::int64_t>(j, "goal", what);
        algo = field<std::string>(j, "algo", what);
        model = field<std::string>(j, "model", what);
        budget = field<std::size_t>(j, "budget", what);
        n = field<std::size_t>(j, "n", what);
        seed = field<std::uint64_t>(j, "seed", what);
        require(!world.empty(), what + ": 'world' is required");
        require(n > 0, what + ": 'n' must be positive");
    }

    SearchRunner runner() const {
        return as_config([&] {
            return SearchRunner(AlgorithmSpec::parse(model.empty() ? algo : algo + ":" + model), n, seed);
        });
    }
};

// ---------------------------------------------------------------------------

int cmd_gen(const ojson& given, const Globals& g, std::ostream& out) {
    ojson j = given;
    const fs::path dir = g.output_dir();
    const std::string dataset = take_string(j, "dataset", (dir / "dataset").string());
    WorldSpec spec = as_config([&] { return spec_from_json(j); });
    ojson resolved = spec_to_json(spec);
    resolved["dataset"] = dataset;
    write_snapshot(resolved, dir, "gen");
    generate_dataset(spec, dataset);
    out << "generated " << to_string(spec.family) << " dataset in " << dataset << " (train " << spec.train << ", val "
        << spec.val << ", test " << spec.test << " graphs)\n";
    return kExitOk;
}

int cmd_oracle(const ojson& given, const Globals& g, std::ostream& out) {
    const ojson defaults{{"world", ""}, {"goal", -1}, {"format", "csv"}, {"output", ""}};
    ojson j = resolve(defaults, given, "oracle");
    const auto world = field<std::string>(j, "world", "oracle");
    const auto format = field<std::string>(j, "format", "oracle");
    auto output = field<std::string>(j, "output", "oracle");
    require(!world.empty(), "oracle: 'world' is required");
    require(format == "csv" || format == "binary", "oracle: format must be csv or binary, got '" + format + "'");
    const fs::path dir = g.output_dir();
    if (output.empty()) output = (dir / (format == "csv" ? "distances.csv" : "distances.bin")).string();
    j["output"] = output;
    write_snapshot(j, dir, "oracle");

    Graph graph = load_graph(world);
    const NodeId goal = checked_node(graph, field<std::int64_t>(j, "goal", "oracle"), "goal");
    DistanceField field_ = distances_from(graph, goal);
    std::ofstream file(output, format == "csv" ? std::ios::out : std::ios::binary);
    if (!file) throw std::runtime_error("cannot write " + output);
    if (format == "csv") {
        write_distance_csv(field_, file);
    } else {
        write_distance_binary(field_, file);
    }
    std::size_t reachable = 0;
    for (std::size_t v = 0; v < graph.node_count(); ++v) reachable += field_.reachable(NodeId(v)) ? 1 : 0;
    out << "wrote distances to goal " << goal << " for " << graph.node_count() << " nodes (" << reachable
        << " reachable) to " << output << '\n';
    return kExitOk;
}

int cmd_search(const ojson& given, const Globals& g, std::ostream& out) {
    ojson defaults = SingleSearch::defaults();
    defaults["log"] = "";
    defaults["render"] = "";
    ojson j = resolve(defaults, given, "search");
    SingleSearch s;
    s.load(j, "search");
    const fs::path dir = g.output_dir();
    std::string log = field<std::string>(j, "log", "search");
    const std::string render_path = field<std::string>(j, "render", "search");
    if (log.empty()) log = (dir / "search.json").string();
    j["log"] = log;
    SearchRunner runner = s.runner();
    write_snapshot(j, dir, "search");

    Graph graph = load_graph(s.world);
    const NodeId start = checked_node(graph, s.start, "start");
    const NodeId goal = checked_node(graph, s.goal, "goal");
    SearchResult result = runner.run(graph, start, goal, s.budget, 0);

    ojson record{{"world", s.world}, {"algo", s.algo}, {"start", start}, {"goal", goal}};
    const ojson body = search_result_to_json(result);
    for (const auto& [k, v] : body.items()) record[k] = v;
    fs::create_directories(fs::absolute(log).parent_path());
    write_json_file(record, log);
    if (!render_path.empty()) render(graph, result, start, goal, fs::path(render_path));
    out << s.algo << ": found=" << (result.found ? "true" : "false") << " expansions=" << result.expansions
        << " path_length=" << result.path_length << '\n';
    return kExitOk;
}

int cmd_render(const ojson& given, const Globals& g, std::ostream& out) {
    ojson defaults = SingleSearch::defaults();
    defaults["log"] = "";
    defaults["output"] = "";
    ojson j = resolve(defaults, given, "render");
    SingleSearch s;
    s.load(j, "render");
    const fs::path dir = g.output_dir();
    const std::string log = field<std::string>(j, "log", "render");
    std::string output = field<std::string>(j, "output", "render");
    if (output.empty()) output = (dir / "render.pgm").string();
    j["output"] = output;
    std::optional<SearchRunner> runner;
    if (log.empty()) runner.emplace(s.runner());
    write_snapshot(j, dir, "render");

    Graph graph = load_graph(s.world);
    SearchResult result;
    if (!log.empty()) {
        ojson record = read_json_file(log);
        result = search_result_from_json(record);
        if (s.start < 0 && record.contains("start")) s.start = record["start"].get<std::int64_t>();
        if (s.goal < 0 && record.contains("goal")) s.goal = record["goal"].get<std::int64_t>();
    }
    const NodeId start = checked_node(graph, s.start, "start");
    const NodeId goal = checked_node(graph, s.goal, "goal");
    if (runner) result = runner->run(graph, start, goal, s.budget, 0);
    fs::create_directories(fs::absolute(output).parent_path());
    render(graph, result, start, goal, fs::path(output));
    out << "rendered " << result.expansion_log.size() << " expansions to " << output << '\n';
    return kExitOk;
}

int cmd_train(const ojson& given, const Globals& g, std::ostream& out, std::ostream& err) {
    ojson j = given;
    const fs::path dir = g.output_dir();
    const std::string kind = take_string(j, "model", "phil");
    const std::string dataset = take_string(j, "dataset", "");
    require(kind == "phil" || kind == "sl", "train: model must be phil or sl, got '" + kind + "'");

    if (kind == "sl") {
        SlConfig cfg = as_config([&] { return sl_config_from_json(j); });
        require(!dataset.empty(), "train: 'dataset' is required");
        ojson resolved{{"model", kind}, {"dataset", dataset}};
        const ojson body = sl_config_to_json(cfg);
        for (const auto& [k, v] : body.items()) resolved[k] = v;
        write_snapshot(resolved, dir, "train");
        DistanceMlp net = train_sl_baseline(fs::path(dataset), cfg);
        save_distance_mlp(net, dir / "sl_model.json");
        out << "saved supervised baseline to " << (dir / "sl_model.json").string() << '\n';
        return kExitOk;
    }

    TrainConfig cfg = as_config([&] { return config_from_json(j); });
    require(!dataset.empty(), "train: 'dataset' is required");
    ojson resolved{{"model", kind}, {"dataset", dataset}};
    const ojson body = config_to_json(cfg);
    for (const auto& [k, v] : body.items()) resolved[k] = v;
    write_snapshot(resolved, dir, "train");

    fs::create_directories(dir / "checkpoints");
    auto on_iteration = [&](const TrainLogRow& row, const HeuristicNet& net) {
        std::ostringstream name;
        name << "iter_" << std::setw(4) << std::setfill('0') << row.iteration << ".json";
        save_model(net, dir / "checkpoints" / name.str());
        if (g.verbosity > 0) {
            err << "iteration " << row.iteration << " beta " << row.beta << " loss " << row.loss << " val_expansions "
                << row.val_expansions << " trajectories " << row.dataset_size << '\n';
        }
    };
    TrainResult result = train(fs::path(dataset), cfg, on_iteration);
    save_model(result.best, dir / "model.json");
    {
        std::ofstream csv(dir / "train_log.csv");
        if (!csv) throw std::runtime_error("cannot write " + (dir / "train_log.csv").string());
        write_train_log_csv(result.log, csv);
    }
    write_json_file(ojson{{"best_iteration", result.best_iteration},
                          {"best_val_expansions", result.best_val_expansions},
                          {"labels", result.labels},
                          {"parameters", result.best.parameter_count()}},
                    dir / "train_summary.json");
    out << "selected iteration " << result.best_iteration << " (validation expansions " << result.best_val_expansions
        << "), saved to " << (dir / "model.json").string() << '\n';
    return kExitOk;
}

int cmd_eval(const ojson& given, const Globals& g, std::ostream& out, std::ostream& err) {
    ExperimentSpec spec = as_config([&] { return experiment_from_json(given); });
    require(!spec.dataset.empty(), "eval: 'dataset' is required");
    require(!spec.algorithms.empty(), "eval: at least one algorithm is required");
    if (spec.output.empty()) spec.output = g.output_dir();
    write_snapshot(experiment_to_json(spec), spec.output, "eval");

    ResultTable table = run_matrix(spec);
    const EmitOptions options{spec.timing};
    for (const auto& name : spec.formats) {
        const TableFormat format = parse_table_format(name);
        const char* ext = format == TableFormat::Csv ? "csv" : format == TableFormat::Json ? "json" : "md";
        std::ofstream file(spec.output / (std::string("results.") + ext));
        if (!file) throw std::runtime_error("cannot write results under " + spec.output.string());
        emit(table, format, file, options);
    }
    emit(table, TableFormat::Markdown, out, options);
    if (table.any_crash()) {
        for (std::size_t a = 0; a < table.rows.size(); ++a) {
            for (std::size_t p = 0; p < table.outcomes[a].size(); ++p) {
                const auto& o = table.outcomes[a][p];
                if (o.crashed) err << table.rows[a].algorithm << " crashed on problem " << p << ": " << o.error << '\n';
            }
        }
        return kExitRuntime;
    }
    return kExitOk;
}

int cmd_selfcheck(const ojson& given, const Globals& g, std::ostream& out) {
    ojson j = resolve(ojson{{"seed", 0}}, given, "selfcheck");
    write_snapshot(j, g.output_dir(), "selfcheck");
    bool ok = true;
    for (const auto& r : run_selfcheck(field<std::uint64_t>(j, "seed", "selfcheck"))) {
        out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
        ok &= r.passed;
    }
    return ok ? kExitOk : kExitRuntime;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Learned best-first search heuristics: datasets, search, training and evaluation", "phil"};
    app.require_subcommand(1);
    Globals g;
    g.seed_opt = app.add_option("--seed", g.seed, "global seed (overrides config seeds)");
    g.threads_opt = app.add_option("--threads", g.threads, "worker threads for evaluation")->check(CLI::PositiveNumber);
    app.add_option("--verbosity", g.verbosity, "0 quiet, 1 progress")->capture_default_str();
    app.add_option("-o,--out", g.out, std::string("output directory (default: $") + kOutputDirEnv + " or ./phil_out)");

    CLI::App* gen = app.add_subcommand("gen", "generate a dataset of grid worlds and problems");
    Overrides gen_o(gen);
    std::string family, policy, source, dataset_dir;
    int width = 0, height = 0, depth = 0, connectivity = 0, n_train = 0, n_val = 0, n_test = 0, per_graph = 0;
    gen_o.option("-f,--family", "family", family, "world family");
    gen_o.option("--width", "width", width, "grid width");
    gen_o.option("--height", "height", height, "grid height");
    gen_o.option("--depth", "depth", depth, "grid depth (3D families)");
    gen_o.option("--connectivity", "connectivity", connectivity, "4, 8 (2D) or 6 (3D)");
    gen_o.option("--train", "train", n_train, "training graphs");
    gen_o.option("--val", "val", n_val, "validation graphs");
    gen_o.option("--test", "test", n_test, "test graphs");
    gen_o.option("--policy", "start_goal_policy", policy, "fixed_corners or uniform_random");
    gen_o.option("--problems-per-graph", "problems_per_graph", per_graph, "problems drawn per graph");
    gen_o.option("--source", "source", source, "graph file for the file family");
    gen_o.option("-d,--dataset", "dataset", dataset_dir, "dataset directory (default: <out>/dataset)");

    CLI::App* oracle = app.add_subcommand("oracle", "dump exact goal distances of a graph");
    Overrides oracle_o(oracle);
    std::string o_world, o_format, o_output;
    std::int64_t o_goal = -1;
    oracle_o.option("-w,--world", "world", o_world, "graph file");
    oracle_o.option("--goal", "goal", o_goal, "goal node id");
    oracle_o.option("--format", "format", o_format, "csv or binary");
    oracle_o.option("--output", "output", o_output, "output file");

    CLI::App* search = app.add_subcommand("search", "run one search and log it");
    Overrides search_o(search);
    SingleSearch search_args;
    std::string s_log, s_render;
    search_args.add_options(search_o);
    search_o.option("--log", "log", s_log, "search log JSON (default: <out>/search.json)");
    search_o.option("--render", "render", s_render, "also write a PGM image");

    CLI::App* train_cmd = app.add_subcommand("train", "train a learned heuristic (or the supervised baseline)");
    Overrides train_o(train_cmd);
    std::string t_dataset, t_kind;
    train_o.option("-d,--dataset", "dataset", t_dataset, "dataset directory");
    train_o.option("--model", "model", t_kind, "phil or sl");

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate algorithms on a dataset split");
    Overrides eval_o(eval_cmd);
    std::string e_dataset, e_split, e_reference;
    std::vector<std::string> e_algos, e_formats;
    std::size_t e_budget = 0, e_n = 4;
    int e_max = 0;
    eval_o.option("-d,--dataset", "dataset", e_dataset, "dataset directory");
    eval_o.option("--split", "split", e_split, "train, val or test");
    eval_o.option("-a,--algo", "algorithms", e_algos, "algorithms as kind, label=kind or label=kind:model");
    eval_o.option("--reference", "reference", e_reference, "label of the ratio reference");
    eval_o.option("-b,--budget", "budget", e_budget, "expansion budget, 0 for |V|");
    eval_o.option("-n,--neighbors", "n", e_n, "sampled neighbors per node (phil)");
    eval_o.option("--max-problems", "max_problems", e_max, "evaluate only the first k problems");
    eval_o.option("--format", "formats", e_formats, "csv, json, markdown");
    eval_o.flag("--no-timing", "timing", false, "omit the wall-clock column");

    CLI::App* render_cmd = app.add_subcommand("render", "draw a search over a grid world as PGM");
    Overrides render_o(render_cmd);
    SingleSearch render_args;
    std::string r_log, r_output;
    render_args.add_options(render_o);
    render_o.option("--log", "log", r_log, "search log to draw instead of running a search");
    render_o.option("--output", "output", r_output, "image path (default: <out>/render.pgm)");

    CLI::App* selfcheck = app.add_subcommand("selfcheck", "run gradient, oracle and invariant checks");
    Overrides selfcheck_o(selfcheck);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_o.merged(g, true, false), g, out);
        if (oracle->parsed()) return cmd_oracle(oracle_o.merged(g, false, false), g, out);
        if (search->parsed()) return cmd_search(search_o.merged(g, true, false), g, out);
        if (train_cmd->parsed()) return cmd_train(train_o.merged(g, true, false), g, out, err);
        if (eval_cmd->parsed()) return cmd_eval(eval_o.merged(g, true, true), g, out, err);
        if (render_cmd->parsed()) return cmd_render(render_o.merged(g, true, false), g, out);
        if (selfcheck->parsed()) return cmd_selfcheck(selfcheck_o.merged(g, true, false), g, out);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitConfig;
}

}  // namespace phil
