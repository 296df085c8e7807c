#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "phil/graph.hpp"

namespace phil {

/// Exact hop distances from every node to one goal.
struct DistanceField {
    static constexpr std::int32_t kUnreachable = std::numeric_limits<std::int32_t>::max();

    NodeId goal = -1;
    std::vector<std::int32_t> dist;

    bool reachable(NodeId v) const { return dist[v] != kUnreachable; }
};

/// Single-source BFS from `goal` (undirected, so this is node-to-goal distance).
DistanceField distances_from(const Graph& graph, NodeId goal);

/// dist[node]; returns DistanceField::kUnreachable for disconnected nodes.
std::int32_t h_star(const DistanceField& field, NodeId node);

/// Exact hop count start -> goal, or kUnreachable.
std::int32_t shortest_path_length(const Graph& graph, NodeId start, NodeId goal);

/// CSV table `node,distance` (unreachable written as -1).
void write_distance_csv(const DistanceField& field, std::ostream& out);
/// Little-endian binary: magic "PHDF", u32 version, i32 goal, u64 count, i32[count].
void write_distance_binary(const DistanceField& field, std::ostream& out);
DistanceField read_distance_binary(std::istream& in);

}  // namespace phil
