#pragma once

#include <vector>

#include "invp/neighbors.hpp"

namespace invp {

enum class PositiveMethod { propagation, knn_baseline };

struct PositiveSet {
    Index anchor = 0;
    std::vector<Index> members;  // ascending
    Index k_used = 0;
    Index l_used = 0;
    PositiveMethod method = PositiveMethod::propagation;
};

// Every sample within l hops of the anchor on the directed graph whose
// edges are each node's k-prefix. The anchor itself is never a member.
PositiveSet propagate(const NeighborTable& table, Index anchor, Index k, Index l);

// Level-by-level frontier recomputation with no visited set. Slow on
// purpose; exists to cross-check propagate.
std::vector<Index> reachability_oracle(const NeighborTable& table, Index anchor, Index k, Index l);

// The K nearest neighbors of the anchor.
PositiveSet knn_baseline(const NeighborTable& table, Index anchor, Index K);

}  // namespace invp
