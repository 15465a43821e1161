#include "invp/discovery.hpp"

#include <algorithm>

#include "invp/error.hpp"

namespace invp {

namespace {

void check_args(const NeighborTable& table, Index anchor, Index k, Index l) {
    if (l == 0) throw ConfigError("propagate: depth l must be at least 1");
    if (k == 0) throw ConfigError("propagate: fan-out k must be at least 1");
    if (k > table.k_max()) {
        throw ConfigError("propagate: k=" + std::to_string(k) + " exceeds table k_max=" + std::to_string(table.k_max()));
    }
    if (anchor >= table.size()) throw BoundsError("propagate: anchor out of range");
}

}  // namespace

PositiveSet propagate(const NeighborTable& table, Index anchor, Index k, Index l) {
    check_args(table, anchor, k, l);
    // each node is expanded at most once
    std::vector<char> seen(table.size(), 0);
    seen[anchor] = 1;
    std::vector<Index> frontier{anchor};
    std::vector<Index> next;
    std::vector<Index> members;
    for (Index step = 0; step < l && !frontier.empty(); ++step) {
        next.clear();
        for (Index u : frontier) {
            for (const auto& nb : table.prefix(u, k)) {
                if (!seen[nb.index]) {
                    seen[nb.index] = 1;
                    next.push_back(nb.index);
                    members.push_back(nb.index);
                }
            }
        }
        frontier.swap(next);
    }
    std::sort(members.begin(), members.end());
    return PositiveSet{anchor, std::move(members), k, l, PositiveMethod::propagation};
}

std::vector<Index> reachability_oracle(const NeighborTable& table, Index anchor, Index k, Index l) {
    check_args(table, anchor, k, l);
    std::vector<char> reached(table.size(), 0);
    std::vector<char> level(table.size(), 0);
    level[anchor] = 1;
    for (Index step = 1; step <= l; ++step) {
        std::vector<char> following(table.size(), 0);
        for (Index u = 0; u < table.size(); ++u) {
            if (!level[u]) continue;
            for (const auto& nb : table.prefix(u, k)) following[nb.index] = 1;
        }
        for (Index j = 0; j < table.size(); ++j) {
            if (following[j]) reached[j] = 1;
        }
        level.swap(following);
    }
    std::vector<Index> out;
    for (Index j = 0; j < table.size(); ++j) {
        if (reached[j] && j != anchor) out.push_back(j);
    }
    return out;
}

PositiveSet knn_baseline(const NeighborTable& table, Index anchor, Index K) {
    if (K > table.k_max()) {
        throw ConfigError("knn_baseline: K=" + std::to_string(K) + " exceeds table k_max=" + std::to_string(table.k_max()));
    }
    std::vector<Index> members;
    members.reserve(K);
    for (const auto& nb : table.prefix(anchor, K)) members.push_back(nb.index);
    std::sort(members.begin(), members.end());
    return PositiveSet{anchor, std::move(members), K, 1, PositiveMethod::knn_baseline};
}

}  // namespace invp
