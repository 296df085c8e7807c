#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "phil/search.hpp"
#include "phil/worlds.hpp"

namespace phil {

/// One column of an experiment. `kind` picks the driver; `label` names the row.
/// Kinds: bfs, oracle, mha, bfws, phil, sl, greedy_{euclidean,manhattan,chebyshev},
/// astar_{euclidean,manhattan,chebyshev,zero}.
struct AlgorithmSpec {
    std::string label;
    std::string kind;
    std::filesystem::path model;  // phil and sl only

    /// Parses `kind`, `label=kind` or `label=kind:model_path`.
    static AlgorithmSpec parse(const std::string& text);
};

bool is_known_algorithm(const std::string& kind);
std::vector<std::string> known_algorithms();

struct ExperimentSpec {
    std::filesystem::path dataset;
    std::string split = "test";
    std::vector<AlgorithmSpec> algorithms;
    std::string reference = "astar_euclidean";  // label of the ratio reference
    std::size_t budget = 0;                     // 0: |V| of each graph
    std::uint64_t seed = 0;
    std::size_t n = 4;
    int threads = 1;
    int max_problems = 0;                       // 0: all problems of the split
    std::filesystem::path output;               // empty: caller's default
    std::vector<std::string> formats{"csv", "json", "markdown"};
    bool timing = true;
};

nlohmann::ordered_json experiment_to_json(const ExperimentSpec& spec);
/// Strict: unknown keys raise std::invalid_argument naming the key.
ExperimentSpec experiment_from_json(const nlohmann::json& j);

/// Ready-to-run algorithm: models are loaded once and shared read-only.
class SearchRunner {
public:
    SearchRunner(const AlgorithmSpec& spec, std::size_t n, std::uint64_t seed);
    SearchRunner(std::string label, std::shared_ptr<const HeuristicNet> net, std::size_t n, std::uint64_t seed);
    SearchRunner(std::string label, std::shared_ptr<const DistanceMlp> model);

    const std::string& label() const { return label_; }
    const std::string& kind() const { return kind_; }
    /// Feature bounds used by BFWS binning (dataset-wide when set).
    void set_feature_bounds(std::vector<std::pair<double, double>> bounds) { bounds_ = std::move(bounds); }

    SearchResult run(const Graph& graph, NodeId start, NodeId goal, std::size_t budget, std::uint64_t problem_index) const;

private:
    std::string label_;
    std::string kind_;
    std::size_t n_ = 4;
    std::uint64_t seed_ = 0;
    std::shared_ptr<const HeuristicNet> net_;
    std::shared_ptr<const DistanceMlp> sl_;
    std::vector<std::pair<double, double>> bounds_;
};

struct ProblemOutcome {
    std::size_t expansions = 0;
    bool found = false;
    std::int64_t path_length = -1;
    double wall_time = 0.0;
    bool crashed = false;
    std::string error;
};

struct ResultRow {
    std::string algorithm;
    std::string dataset;
    std::size_t problems = 0;
    std::size_t successes = 0;
    std::size_t crashes = 0;
    double mean_expansions = 0.0;   // over successful runs
    double ratio = 0.0;             // mean expansions / reference mean expansions, common successes
    double success_rate = 0.0;
    double mean_path_length = 0.0;  // over successful runs
    double time_per_expansion = 0.0;
};

struct ResultTable {
    std::string reference;
    std::vector<ResultRow> rows;
    /// Per algorithm (row order), per problem outcomes.
    std::vector<std::vector<ProblemOutcome>> outcomes;

    const ResultRow& row(const std::string& algorithm) const;
    bool any_crash() const;
};

/// Aggregates outcomes into rows; ratios use the problems every compared pair solved.
ResultTable summarize(const std::string& dataset, const std::vector<std::string>& labels,
                      std::vector<std::vector<ProblemOutcome>> outcomes, const std::string& reference);

/// Runs every algorithm on every problem of the split with a worker pool; the
/// result does not depend on the thread count.
ResultTable run_matrix(const SplitData& split, const std::string& dataset, const std::vector<SearchRunner>& runners,
                       const std::string& reference, std::size_t budget, int threads, int max_problems = 0);
ResultTable run_matrix(const ExperimentSpec& spec);

enum class TableFormat { Csv, Json, Markdown };
TableFormat parse_table_format(const std::string& name);

struct EmitOptions {
    bool timing = true;  // wall-clock column; off for byte-reproducible tables
};

void emit(const ResultTable& table, TableFormat format, std::ostream& out, const EmitOptions& options = {});
ResultTable table_from_json(const nlohmann::json& j);

/// Grayscale PGM P2 of a search over a grid graph: obstacles 0, unexplored free
/// 255, expanded 180, path 90, start and goal 30. Rows run from the top (largest y).
/// 3D grids produce one image per layer. Throws "render requires grid metadata".
void render(const Graph& graph, const SearchResult& result, NodeId start, NodeId goal, std::ostream& out);
void render(const Graph& graph, const SearchResult& result, NodeId start, NodeId goal,
            const std::filesystem::path& path);

/// Dataset-wide per-dimension feature range of a split.
std::vector<std::pair<double, double>> split_feature_bounds(const SplitData& split);

nlohmann::ordered_json search_result_to_json(const SearchResult& r);
SearchResult search_result_from_json(const nlohmann::json& j);

}  // namespace phil
