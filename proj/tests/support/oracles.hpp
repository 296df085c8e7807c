#pragma once

// Independent reference implementations used only by the tests. None of these
// call into the library's search or distance code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "phil/graph.hpp"
#include "phil/tensor.hpp"
#include "phil/worlds.hpp"

namespace phil::testing {

inline constexpr std::int64_t kInf = std::numeric_limits<std::int64_t>::max() / 4;

/// All-pairs hop distances, row-major [from * n + to]; kInf when disconnected.
inline std::vector<std::int64_t> floyd_warshall(const Graph& g) {
    const std::size_t n = g.node_count();
    std::vector<std::int64_t> d(n * n, kInf);
    for (std::size_t v = 0; v < n; ++v) {
        d[v * n + v] = 0;
        for (NodeId u : g.neighbors(NodeId(v))) d[v * n + std::size_t(u)] = 1;
    }
    for (std::size_t k = 0; k < n; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
            const std::int64_t dik = d[i * n + k];
            if (dik >= kInf) continue;
            for (std::size_t j = 0; j < n; ++j) {
                const std::int64_t cand = dik + d[k * n + j];
                if (cand < d[i * n + j]) d[i * n + j] = cand;
            }
        }
    }
    return d;
}

inline std::vector<double> random_features(std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    std::vector<double> f(n * dim);
    for (auto& x : f) x = u(rng);
    return f;
}

/// Random spanning tree plus independent extra edges with probability p.
inline Graph random_connected_graph(std::mt19937_64& rng, std::size_t n, double p, std::size_t dim = 2,
                                    std::size_t edge_dim = 0) {
    std::vector<std::vector<bool>> used(n, std::vector<bool>(n, false));
    std::vector<EdgeSpec> edges;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    auto add = [&](std::size_t a, std::size_t b) {
        if (a == b || used[a][b]) return;
        used[a][b] = used[b][a] = true;
        std::vector<double> ef(edge_dim);
        for (auto& x : ef) x = u(rng);
        edges.push_back({NodeId(a), NodeId(b), ef});
    };
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 1; i < n; ++i) add(order[i], order[rng() % i]);
    std::bernoulli_distribution extra(p);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (extra(rng)) add(a, b);
        }
    }
    return Graph(n, dim, random_features(rng, n, dim), edge_dim, edges);
}

/// Erdos-Renyi graph, possibly disconnected.
inline Graph random_graph(std::mt19937_64& rng, std::size_t n, double p, std::size_t dim = 2) {
    std::vector<EdgeSpec> edges;
    std::bernoulli_distribution keep(p);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            if (keep(rng)) edges.push_back({NodeId(a), NodeId(b), {}});
        }
    }
    return Graph(n, dim, random_features(rng, n, dim), 0, edges);
}

inline Graph path_graph(std::size_t n) {
    std::vector<EdgeSpec> edges;
    std::vector<double> f;
    for (std::size_t i = 0; i < n; ++i) {
        f.push_back(double(i));
        f.push_back(0.0);
        if (i + 1 < n) edges.push_back({NodeId(i), NodeId(i + 1), {}});
    }
    return Graph(n, 2, f, 0, edges);
}

inline Occupancy random_occupancy(std::mt19937_64& rng, int w, int h, double density) {
    Occupancy occ(w, h, 1);
    std::bernoulli_distribution blocked(density);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) occ.set(x, y, 0, blocked(rng));
    }
    occ.set(0, 0, 0, false);
    occ.set(w - 1, h - 1, 0, false);
    return occ;
}

/// Central finite differences of a scalar function of one tensor's entries.
inline std::vector<double> numeric_gradient(Tensor param, const std::function<double()>& f, double eps = 1e-6) {
    std::vector<double> g(param.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
        const Real saved = param.data()[i];
        param.mutable_data()[i] = Real(saved + eps);
        const double up = f();
        param.mutable_data()[i] = Real(saved - eps);
        const double down = f();
        param.mutable_data()[i] = saved;
        g[i] = (up - down) / (2 * eps);
    }
    return g;
}

/// Relative closeness with an absolute floor for values near zero.
inline bool close(double a, double b, double rtol, double atol = 1e-9) {
    return std::abs(a - b) <= atol + rtol * std::max(std::abs(a), std::abs(b));
}

inline Tensor random_tensor(std::mt19937_64& rng, std::size_t r, std::size_t c, bool param = true) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<Real> v(r * c);
    for (auto& x : v) x = Real(u(rng));
    return param ? Tensor::parameter(r, c, v) : Tensor(r, c, v);
}

}  // namespace phil::testing
