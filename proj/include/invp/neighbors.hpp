#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <unordered_set>
#include <vector>

#include "invp/bank.hpp"

namespace invp {

struct Neighbor {
    Index index = 0;
    double similarity = 0.0;

    bool operator==(const Neighbor&) const = default;
};

// Descending similarity, ascending index on ties.
inline bool ranks_before(const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.index < b.index;
}

// Exact top-k_max neighbor lists for every bank row, self excluded. A single
// table serves both the small k used for propagation and the large M used
// for the background set, since one is a prefix of the other.
class NeighborTable {
public:
    NeighborTable() = default;
    NeighborTable(Index n, Index k_max, std::vector<Neighbor> entries, std::int64_t epoch_stamp = 0);

    // Builds a table from explicit adjacency lists; used for hand-made graphs.
    static NeighborTable from_lists(const std::vector<std::vector<Index>>& lists, std::int64_t epoch_stamp = 0);

    Index size() const { return n_; }
    Index k_max() const { return k_max_; }
    std::int64_t epoch_stamp() const { return epoch_stamp_; }

    std::span<const Neighbor> neighbors(Index anchor) const;
    std::span<const Neighbor> prefix(Index anchor, Index k) const;

    bool operator==(const NeighborTable&) const = default;

private:
    Index n_ = 0;
    Index k_max_ = 0;
    std::vector<Neighbor> entries_;
    std::int64_t epoch_stamp_ = 0;
};

double similarity(std::span<const double> u, std::span<const double> v);

NeighborTable topk_all(const EmbeddingBank& bank, Index k_max, std::int64_t epoch_stamp = 0);

std::vector<Neighbor> topk_query(const EmbeddingBank& bank, std::span<const double> v, Index k,
                                 const std::unordered_set<Index>& exclude = {});

// "i: j1:s1 j2:s2 ..." per anchor.
void write_neighbors(std::ostream& out, const NeighborTable& table);

}  // namespace invp
