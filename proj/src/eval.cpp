#include "phil/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "phil/json_io.hpp"

namespace phil {

namespace {

const std::vector<std::string>& algorithm_kinds() {
    static const std::vector<std::string> kinds{
        "bfs",          "oracle",           "mha",
        "bfws",         "phil",             "sl",
        "greedy_euclidean", "greedy_manhattan", "greedy_chebyshev",
        "astar_euclidean",  "astar_manhattan",  "astar_chebyshev",
        "astar_zero",
    };
    return kinds;
}

HeuristicTag tag_from_suffix(const std::string& suffix) {
    if (suffix == "euclidean") return HeuristicTag::Euclidean;
    if (suffix == "manhattan") return HeuristicTag::Manhattan;
    if (suffix == "chebyshev") return HeuristicTag::Chebyshev;
    if (suffix == "zero") return HeuristicTag::Zero;
    throw std::invalid_argument("unknown heuristic '" + suffix + "'");
}

std::string format_number(double x, int precision) {
    if (std::isnan(x)) return "nan";
    std::ostringstream s;
    s << std::fixed << std::setprecision(precision) << x;
    return s.str();
}

std::string full_precision(double x) {
    if (std::isnan(x)) return "nan";
    std::ostringstream s;
    s << std::setprecision(std::numeric_limits<double>::max_digits10) << x;
    return s.str();
}

}  // namespace

bool is_known_algorithm(const std::string& kind) {
    const auto& k = algorithm_kinds();
    return std::find(k.begin(), k.end(), kind) != k.end();
}

std::vector<std::string> known_algorithms() { return algorithm_kinds(); }

AlgorithmSpec AlgorithmSpec::parse(const std::string& text) {
    AlgorithmSpec spec;
    std::string rest = text;
    if (auto eq = rest.find('='); eq != std::string::npos) {
        spec.label = rest.substr(0, eq);
        rest = rest.substr(eq + 1);
    }
    if (auto colon = rest.find(':'); colon != std::string::npos) {
        spec.model = rest.substr(colon + 1);
        rest = rest.substr(0, colon);
    }
    spec.kind = rest;
    if (spec.label.empty()) spec.label = spec.kind;
    if (!is_known_algorithm(spec.kind)) throw std::invalid_argument("unknown algorithm '" + spec.kind + "'");
    if ((spec.kind == "phil" || spec.kind == "sl") && spec.model.empty()) {
        throw std::invalid_argument("algorithm '" + spec.label + "' needs a model path (" + spec.kind + ":<file>)");
    }
    return spec;
}

nlohmann::ordered_json experiment_to_json(const ExperimentSpec& spec) {
    nlohmann::ordered_json j;
    j["dataset"] = spec.dataset.string();
    j["split"] = spec.split;
    j["algorithms"] = nlohmann::ordered_json::array();
    for (const auto& a : spec.algorithms) {
        std::string text = a.label == a.kind ? a.kind : a.label + "=" + a.kind;
        if (!a.model.empty()) text += ":" + a.model.string();
        j["algorithms"].push_back(text);
    }
    j["reference"] = spec.reference;
    j["budget"] = spec.budget;
    j["seed"] = spec.seed;
    j["n"] = spec.n;
    j["threads"] = spec.threads;
    j["max_problems"] = spec.max_problems;
    j["output"] = spec.output.string();
    j["formats"] = spec.formats;
    j["timing"] = spec.timing;
    return j;
}

ExperimentSpec experiment_from_json(const nlohmann::json& j) {
    ExperimentSpec s;
    reject_unknown_keys(j, key_set(experiment_to_json(s)), "experiment");
    try {
        auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
        };
        if (j.contains("dataset")) s.dataset = j.at("dataset").get<std::string>();
        if (j.contains("output")) s.output = j.at("output").get<std::string>();
        get("split", s.split);
        if (j.contains("algorithms")) {
            for (const auto& a : j.at("algorithms")) s.algorithms.push_back(AlgorithmSpec::parse(a.get<std::string>()));
        }
        get("reference", s.reference);
        get("budget", s.budget);
        get("seed", s.seed);
        get("n", s.n);
        get("threads", s.threads);
        get("max_problems", s.max_problems);
        get("formats", s.formats);
        get("timing", s.timing);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("experiment: ") + e.what());
    }
    for (const auto& f : s.formats) parse_table_format(f);
    if (s.n == 0) throw std::invalid_argument("experiment: n must be positive");
    if (s.threads < 1) throw std::invalid_argument("experiment: threads must be at least 1");
    if (!s.algorithms.empty()) {
        bool has_reference = false;
        for (const auto& a : s.algorithms) has_reference |= a.label == s.reference;
        if (!has_reference) {
            if (!is_known_algorithm(s.reference) || s.reference == "phil" || s.reference == "sl") {
                throw std::invalid_argument("experiment: reference '" + s.reference + "' is neither listed nor computable");
            }
            s.algorithms.push_back(AlgorithmSpec::parse(s.reference));
        }
    }
    return s;
}

// ---------------------------------------------------------------------------
// Runners

SearchRunner::SearchRunner(const AlgorithmSpec& spec, std::size_t n, std::uint64_t seed)
    : label_(spec.label), kind_(spec.kind), n_(n), seed_(seed) {
    if (!is_known_algorithm(kind_)) throw std::invalid_argument("unknown algorithm '" + kind_ + "'");
    if (kind_ == "phil") net_ = std::make_shared<HeuristicNet>(load_model(spec.model));
    if (kind_ == "sl") sl_ = std::make_shared<DistanceMlp>(load_distance_mlp(spec.model));
}

SearchRunner::SearchRunner(std::string label, std::shared_ptr<const HeuristicNet> net, std::size_t n,
                           std::uint64_t seed)
    : label_(std::move(label)), kind_("phil"), n_(n), seed_(seed), net_(std::move(net)) {}

SearchRunner::SearchRunner(std::string label, std::shared_ptr<const DistanceMlp> model)
    : label_(std::move(label)), kind_("sl"), sl_(std::move(model)) {}

SearchResult SearchRunner::run(const Graph& graph, NodeId start, NodeId goal, std::size_t budget,
                               std::uint64_t problem_index) const {
    if (kind_ == "bfs") return bfs(graph, start, goal, budget);
    if (kind_ == "oracle") return best_first(graph, start, goal, HeuristicKind::of(HeuristicTag::Oracle), budget);
    if (kind_ == "mha") return mha_star(graph, start, goal, default_mha_heuristics(graph, goal), budget);
    if (kind_ == "bfws") return bfws(graph, start, goal, budget, BfwsOptions{16, bounds_});
    if (kind_ == "phil") return phil_search(graph, start, goal, *net_, n_, instance_seed(seed_, 11, problem_index), budget);
    if (kind_ == "sl") {
        HeuristicKind kind{HeuristicTag::DistanceModel, nullptr, sl_};
        return best_first(graph, start, goal, kind, budget);
    }
    if (kind_.rfind("greedy_", 0) == 0) {
        return best_first(graph, start, goal, HeuristicKind::of(tag_from_suffix(kind_.substr(7))), budget);
    }
    if (kind_.rfind("astar_", 0) == 0) {
        return astar(graph, start, goal,
                     make_node_heuristic(graph, goal, HeuristicKind::of(tag_from_suffix(kind_.substr(6)))), budget);
    }
    throw std::invalid_argument("unknown algorithm '" + kind_ + "'");
}

// ---------------------------------------------------------------------------
// Matrix

const ResultRow& ResultTable::row(const std::string& algorithm) const {
    for (const auto& r : rows) {
        if (r.algorithm == algorithm) return r;
    }
    throw std::out_of_range("result table has no row '" + algorithm + "'");
}

bool ResultTable::any_crash() const {
    return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.crashes > 0; });
}

ResultTable summarize(const std::string& dataset, const std::vector<std::string>& labels,
                      std::vector<std::vector<ProblemOutcome>> outcomes, const std::string& reference) {
    auto ref_it = std::find(labels.begin(), labels.end(), reference);
    if (ref_it == labels.end()) throw std::invalid_argument("reference '" + reference + "' is not among the algorithms");
    const auto& ref = outcomes[static_cast<std::size_t>(ref_it - labels.begin())];

    ResultTable table;
    table.reference = reference;
    for (std::size_t a = 0; a < labels.size(); ++a) {
        const auto& runs = outcomes[a];
        ResultRow row;
        row.algorithm = labels[a];
        row.dataset = dataset;
        row.problems = runs.size();
        double exp_sum = 0, path_sum = 0, time_sum = 0, common_a = 0, common_ref = 0;
        std::size_t total_expansions = 0;
        for (std::size_t p = 0; p < runs.size(); ++p) {
            const auto& o = runs[p];
            if (o.crashed) {
                ++row.crashes;
                continue;
            }
            time_sum += o.wall_time;
            total_expansions += o.expansions;
            if (!o.found) continue;
            ++row.successes;
            exp_sum += static_cast<double>(o.expansions);
            path_sum += static_cast<double>(o.path_length);
            if (ref[p].found && !ref[p].crashed) {
                common_a += static_cast<double>(o.expansions);
                common_ref += static_cast<double>(ref[p].expansions);
            }
        }
        const double nan = std::numeric_limits<double>::quiet_NaN();
        row.success_rate = row.problems ? static_cast<double>(row.successes) / static_cast<double>(row.problems) : 0.0;
        row.mean_expansions = row.successes ? exp_sum / static_cast<double>(row.successes) : nan;
        row.mean_path_length = row.successes ? path_sum / static_cast<double>(row.successes) : nan;
        row.ratio = common_ref > 0 ? common_a / common_ref : nan;
        row.time_per_expansion = total_expansions ? time_sum / static_cast<double>(total_expansions) : 0.0;
        table.rows.push_back(row);
    }
    table.outcomes = std::move(outcomes);
    return table;
}

ResultTable run_matrix(const SplitData& split, const std::string& dataset, const std::vector<SearchRunner>& runners,
                       const std::string& reference, std::size_t budget, int threads, int max_problems) {
    std::size_t P = split.problems.size();
    if (max_problems > 0) P = std::min(P, static_cast<std::size_t>(max_problems));
    const std::size_t A = runners.size();
    std::vector<std::vector<ProblemOutcome>> outcomes(A, std::vector<ProblemOutcome>(P));
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t task = next++; task < A * P; task = next++) {
            const std::size_t a = task / P, p = task % P;
            const Problem& prob = split.problems[p];
            ProblemOutcome& o = outcomes[a][p];
            try {
                const Graph& g = split.graphs[split.graph_index(prob)];
                SearchResult r = runners[a].run(g, prob.start, prob.goal, budget, p);
                o.expansions = r.expansions;
                o.found = r.found;
                o.path_length = r.path_length;
                o.wall_time = r.wall_time;
            } catch (const std::exception& e) {
                o.crashed = true;
                o.error = e.what();
            }
        }
    };
    const int T = std::max(1, threads);
    if (T == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < T; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::vector<std::string> labels;
    for (const auto& r : runners) labels.push_back(r.label());
    return summarize(dataset, labels, std::move(outcomes), reference);
}

std::vector<std::pair<double, double>> split_feature_bounds(const SplitData& split) {
    std::vector<std::pair<double, double>> bounds;
    for (const auto& g : split.graphs) {
        auto b = g.feature_bounds();
        if (bounds.empty()) {
            bounds = b;
            continue;
        }
        if (b.size() != bounds.size()) throw std::invalid_argument("split graphs differ in feature width");
        for (std::size_t d = 0; d < b.size(); ++d) {
            bounds[d].first = std::min(bounds[d].first, b[d].first);
            bounds[d].second = std::max(bounds[d].second, b[d].second);
        }
    }
    return bounds;
}

ResultTable run_matrix(const ExperimentSpec& spec) {
    if (spec.algorithms.empty()) throw std::invalid_argument("experiment: no algorithms");
    SplitData split = load_split(spec.dataset / spec.split);
    const auto bounds = split_feature_bounds(split);
    std::vector<SearchRunner> runners;
    for (const auto& a : spec.algorithms) {
        runners.emplace_back(a, spec.n, spec.seed);
        runners.back().set_feature_bounds(bounds);
    }
    const std::string name = spec.dataset.filename().empty() ? spec.dataset.parent_path().filename().string()
                                                               : spec.dataset.filename().string();
    return run_matrix(split, name, runners, spec.reference, spec.budget, spec.threads, spec.max_problems);
}

// ---------------------------------------------------------------------------
// Emission

TableFormat parse_table_format(const std::string& name) {
    if (name == "csv") return TableFormat::Csv;
    if (name == "json") return TableFormat::Json;
    if (name == "markdown" || name == "md") return TableFormat::Markdown;
    throw std::invalid_argument("unknown table format '" + name + "' (expected csv, json or markdown)");
}

void emit(const ResultTable& table, TableFormat format, std::ostream& out, const EmitOptions& options) {
    switch (format) {
        case TableFormat::Csv: {
            out << "algorithm,dataset,problems,successes,crashes,success_rate,mean_expansions,ratio,mean_path_length";
            if (options.timing) out << ",time_per_expansion";
            out << '\n';
            for (const auto& r : table.rows) {
                out << r.algorithm << ',' << r.dataset << ',' << r.problems << ',' << r.successes << ',' << r.crashes
                    << ',' << full_precision(r.success_rate) << ',' << full_precision(r.mean_expansions) << ','
                    << full_precision(r.ratio) << ',' << full_precision(r.mean_path_length);
                if (options.timing) out << ',' << full_precision(r.time_per_expansion);
                out << '\n';
            }
            break;
        }
        case TableFormat::Json: {
            nlohmann::ordered_json j;
            j["reference"] = table.reference;
            j["ratio_definition"] = "mean expansions over problems solved by both, divided by the reference's";
            j["rows"] = nlohmann::ordered_json::array();
            auto num = [](double x) { return std::isnan(x) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(x); };
            for (const auto& r : table.rows) {
                nlohmann::ordered_json row{{"algorithm", r.algorithm},
                                           {"dataset", r.dataset},
                                           {"problems", r.problems},
                                           {"successes", r.successes},
                                           {"crashes", r.crashes},
                                           {"success_rate", num(r.success_rate)},
                                           {"mean_expansions", num(r.mean_expansions)},
                                           {"ratio", num(r.ratio)},
                                           {"mean_path_length", num(r.mean_path_length)}};
                if (options.timing) row["time_per_expansion"] = r.time_per_expansion;
                j["rows"].push_back(row);
            }
            out << j.dump(1) << '\n';
            break;
        }
        case TableFormat::Markdown: {
            out << "| algorithm | dataset | solved | mean expansions | ratio vs " << table.reference
                << " | mean path length |";
            if (options.timing) out << " s / expansion |";
            out << "\n|---|---|---|---|---|---|" << (options.timing ? "---|" : "") << '\n';
            for (const auto& r : table.rows) {
                out << "| " << r.algorithm << " | " << r.dataset << " | " << r.successes << '/' << r.problems << " | "
                    << format_number(r.mean_expansions, 1) << " | " << format_number(r.ratio, 3) << " | "
                    << format_number(r.mean_path_length, 1) << " |";
                if (options.timing) {
                    std::ostringstream t;
                    t << std::scientific << std::setprecision(2) << r.time_per_expansion;
                    out << ' ' << t.str() << " |";
                }
                out << '\n';
            }
            out << "\nRatios divide mean expansions over the problems solved by both the algorithm and "
                << table.reference << ".\n";
            break;
        }
    }
}

ResultTable table_from_json(const nlohmann::json& j) {
    ResultTable table;
    try {
        table.reference = j.at("reference").get<std::string>();
        auto num = [](const nlohmann::json& v) {
            return v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>();
        };
        for (const auto& r : j.at("rows")) {
            ResultRow row;
            row.algorithm = r.at("algorithm").get<std::string>();
            row.dataset = r.at("dataset").get<std::string>();
            row.problems = r.at("problems").get<std::size_t>();
            row.successes = r.at("successes").get<std::size_t>();
            row.crashes = r.at("crashes").get<std::size_t>();
            row.success_rate = num(r.at("success_rate"));
            row.mean_expansions = num(r.at("mean_expansions"));
            row.ratio = num(r.at("ratio"));
            row.mean_path_length = num(r.at("mean_path_length"));
            if (r.contains("time_per_expansion")) row.time_per_expansion = r.at("time_per_expansion").get<double>();
            table.rows.push_back(row);
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("result table: ") + e.what());
    }
    return table;
}

// ---------------------------------------------------------------------------
// Rendering

void render(const Graph& graph, const SearchResult& result, NodeId start, NodeId goal, std::ostream& out) {
    if (!has_grid_metadata(graph)) throw std::runtime_error("render requires grid metadata");
    const GridInfo info = grid_info(graph);
    std::vector<int> pixel(info.cell_node.size(), 0);
    for (std::size_t i = 0; i < pixel.size(); ++i) pixel[i] = info.cell_node[i] < 0 ? 0 : 255;
    auto paint = [&](NodeId v, int value) {
        if (!graph.valid(v)) return;
        const auto c = grid_coords(graph, v);
        pixel[info.index(c[0], c[1], c[2])] = value;
    };
    for (NodeId v : result.expansion_log) paint(v, 180);
    for (NodeId v : result.path) paint(v, 90);
    paint(start, 30);
    paint(goal, 30);
    for (int z = 0; z < info.depth; ++z) {
        out << "P2\n" << info.width << ' ' << info.height << "\n255\n";
        for (int y = info.height - 1; y >= 0; --y) {
            for (int x = 0; x < info.width; ++x) out << (x ? " " : "") << pixel[info.index(x, y, z)];
            out << '\n';
        }
    }
}

void render(const Graph& graph, const SearchResult& result, NodeId start, NodeId goal,
            const std::filesystem::path& path) {
    if (!has_grid_metadata(graph)) throw std::runtime_error("render requires grid metadata");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    render(graph, result, start, goal, out);
}

nlohmann::ordered_json search_result_to_json(const SearchResult& r) {
    nlohmann::ordered_json j;
    j["expansions"] = r.expansions;
    j["found"] = r.found;
    j["path_length"] = r.path_length;
    j["path"] = r.path;
    j["expansion_log"] = r.expansion_log;
    if (!r.neighbor_reads.empty()) j["neighbor_reads"] = r.neighbor_reads;
    j["wall_time"] = r.wall_time;
    return j;
}

SearchResult search_result_from_json(const nlohmann::json& j) {
    SearchResult r;
    try {
        r.expansions = j.at("expansions").get<std::size_t>();
        r.found = j.at("found").get<bool>();
        r.path_length = j.at("path_length").get<std::int64_t>();
        r.path = j.at("path").get<std::vector<NodeId>>();
        r.expansion_log = j.at("expansion_log").get<std::vector<NodeId>>();
        if (j.contains("neighbor_reads")) r.neighbor_reads = j.at("neighbor_reads").get<std::vector<std::uint32_t>>();
        if (j.contains("wall_time")) r.wall_time = j.at("wall_time").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error(std::string("search log: ") + e.what());
    }
    return r;
}

}  // namespace phil
