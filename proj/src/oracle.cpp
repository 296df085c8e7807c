#include "phil/oracle.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace phil {

DistanceField distances_from(const Graph& graph, NodeId goal) {
    if (!graph.valid(goal)) throw std::out_of_range("distances_from: invalid goal " + std::to_string(goal));
    DistanceField field;
    field.goal = goal;
    field.dist.assign(graph.node_count(), DistanceField::kUnreachable);
    std::vector<NodeId> frontier{goal};
    frontier.reserve(graph.node_count());
    field.dist[goal] = 0;
    for (std::size_t head = 0; head < frontier.size(); ++head) {
        NodeId v = frontier[head];
        for (NodeId w : graph.neighbors(v)) {
            if (field.dist[w] == DistanceField::kUnreachable) {
                field.dist[w] = field.dist[v] + 1;
                frontier.push_back(w);
            }
        }
    }
    return field;
}

std::int32_t h_star(const DistanceField& field, NodeId node) {
    if (node < 0 || static_cast<std::size_t>(node) >= field.dist.size()) {
        throw std::out_of_range("h_star: invalid node " + std::to_string(node));
    }
    return field.dist[node];
}

std::int32_t shortest_path_length(const Graph& graph, NodeId start, NodeId goal) {
    if (!graph.valid(start)) throw std::out_of_range("shortest_path_length: invalid start");
    return h_star(distances_from(graph, goal), start);
}

void write_distance_csv(const DistanceField& field, std::ostream& out) {
    out << "node,distance\n";
    for (std::size_t v = 0; v < field.dist.size(); ++v) {
        out << v << ',' << (field.dist[v] == DistanceField::kUnreachable ? -1 : field.dist[v]) << '\n';
    }
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    out.write(buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
    T value{};
    char buf[sizeof(T)];
    if (!in.read(buf, sizeof(T))) throw std::runtime_error("distance file truncated");
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

}  // namespace

void write_distance_binary(const DistanceField& field, std::ostream& out) {
    out.write("PHDF", 4);
    put_le<std::uint32_t>(out, 1);
    put_le<std::int32_t>(out, field.goal);
    put_le<std::uint64_t>(out, field.dist.size());
    for (auto d : field.dist) put_le<std::int32_t>(out, d);
}

DistanceField read_distance_binary(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "PHDF", 4) != 0) throw std::runtime_error("not a distance file");
    if (get_le<std::uint32_t>(in) != 1) throw std::runtime_error("unsupported distance file version");
    DistanceField field;
    field.goal = get_le<std::int32_t>(in);
    auto n = get_le<std::uint64_t>(in);
    field.dist.resize(n);
    for (auto& d : field.dist) d = get_le<std::int32_t>(in);
    return field;
}

}  // namespace phil
