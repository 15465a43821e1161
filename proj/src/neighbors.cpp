#include "invp/neighbors.hpp"

#include <algorithm>
#include <cstdint>
#include <ostream>

#include "invp/error.hpp"
#include "invp/parallel.hpp"

namespace invp {

NeighborTable::NeighborTable(Index n, Index k_max, std::vector<Neighbor> entries, std::int64_t epoch_stamp)
    : n_(n), k_max_(k_max), entries_(std::move(entries)), epoch_stamp_(epoch_stamp) {
    if (entries_.size() != n_ * k_max_) throw ShapeError("neighbor table: entry count does not match n * k_max");
}

NeighborTable NeighborTable::from_lists(const std::vector<std::vector<Index>>& lists, std::int64_t epoch_stamp) {
    const Index n = lists.size();
    const Index k_max = n == 0 ? 0 : lists.front().size();
    std::vector<Neighbor> entries;
    entries.reserve(n * k_max);
    for (Index i = 0; i < n; ++i) {
        if (lists[i].size() != k_max) throw ShapeError("neighbor table: ragged adjacency lists");
        for (Index r = 0; r < k_max; ++r) {
            const Index j = lists[i][r];
            if (j >= n) throw BoundsError("neighbor table: neighbor index out of range");
            if (j == i) throw ContractError("neighbor table: a node cannot list itself");
            // synthetic similarities that respect the list order
            entries.push_back({j, 1.0 - static_cast<double>(r + 1) / static_cast<double>(k_max + 1)});
        }
    }
    return NeighborTable(n, k_max, std::move(entries), epoch_stamp);
}

std::span<const Neighbor> NeighborTable::neighbors(Index anchor) const {
    if (anchor >= n_) throw BoundsError("neighbor table: anchor " + std::to_string(anchor) + " out of range");
    return {entries_.data() + anchor * k_max_, k_max_};
}

std::span<const Neighbor> NeighborTable::prefix(Index anchor, Index k) const {
    if (k > k_max_) throw ConfigError("neighbor table: prefix " + std::to_string(k) + " exceeds k_max " + std::to_string(k_max_));
    return neighbors(anchor).first(k);
}

double similarity(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) {
        throw ShapeError("similarity: dimension mismatch (" + std::to_string(u.size()) + " vs " + std::to_string(v.size()) + ")");
    }
    // strictly sequential in d; topk_all reproduces this order bit for bit
    double s = 0.0;
    for (std::size_t d = 0; d < u.size(); ++d) s += u[d] * v[d];
    return s;
}

namespace {

const auto by_rank = [](const Neighbor& a, const Neighbor& b) { return ranks_before(a, b); };

// Keeps the best k of candidates in rank order.
void select_top(std::vector<Neighbor>& candidates, Index k) {
    if (k < candidates.size()) {
        std::nth_element(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(), by_rank);
        candidates.resize(k);
    }
    std::sort(candidates.begin(), candidates.end(), by_rank);
}

constexpr Index kAnchorTile = 8;

// out[a * n + j] = sum_d anchors[a][d] * columns[d * n + j] for a tile of
// anchors, accumulated in increasing d (the order similarity() uses).
void scan_similarities(const Matrix& vectors, Index first, Index count, const double* __restrict columns, Index n,
                       double* __restrict out) {
    const Index dim = static_cast<Index>(vectors.cols());
    for (Index k = 0; k < count * n; ++k) out[k] = 0.0;
    for (Index d = 0; d < dim; ++d) {
        const double* __restrict col = columns + d * n;
        for (Index a = 0; a < count; ++a) {
            const double w = vectors(static_cast<Eigen::Index>(first + a), static_cast<Eigen::Index>(d));
            double* __restrict row = out + a * n;
            for (Index j = 0; j < n; ++j) row[j] += w * col[j];
        }
    }
}

// Unit vectors give similarities in [-1, 1]; the bucket index is monotone in
// the value, so only the bucket holding the k-th value needs an exact select.
constexpr int kBuckets = 2048;

int bucket_of(double s) {
    const int b = static_cast<int>((s + 1.0) * (kBuckets / 2));
    return std::clamp(b, 0, kBuckets - 1);
}

struct RowSelector {
    std::vector<std::uint32_t> counts = std::vector<std::uint32_t>(kBuckets);
    std::vector<std::uint16_t> buckets;
    std::vector<double> boundary;
    std::vector<Neighbor> picked;

    // Top k of sims (self excluded) under the table's ordering, written to dst.
    void select(const double* sims, Index n, Index self, Index k, Neighbor* dst) {
        buckets.resize(n);
        std::fill(counts.begin(), counts.end(), 0u);
        for (Index j = 0; j < n; ++j) {
            const int b = bucket_of(sims[j]);
            buckets[j] = static_cast<std::uint16_t>(b);
            ++counts[b];
        }
        --counts[buckets[self]];
        int cut = kBuckets - 1;
        Index above = 0;
        while (above + counts[cut] < k) above += counts[cut--];

        boundary.clear();
        for (Index j = 0; j < n; ++j) {
            if (j != self && buckets[j] == cut) boundary.push_back(sims[j]);
        }
        const auto rank = static_cast<std::ptrdiff_t>(k - above - 1);
        std::nth_element(boundary.begin(), boundary.begin() + rank, boundary.end(), std::greater<>());
        const double threshold = boundary[rank];

        picked.clear();
        for (Index j = 0; j < n; ++j) {
            if (j != self && buckets[j] >= cut && sims[j] > threshold) picked.push_back({j, sims[j]});
        }
        // entries equal to the threshold fill the rest in ascending index order
        for (Index j = 0; j < n && picked.size() < k; ++j) {
            if (j != self && sims[j] == threshold) picked.push_back({j, sims[j]});
        }
        std::sort(picked.begin(), picked.end(), by_rank);
        std::copy(picked.begin(), picked.end(), dst);
    }
};

}  // namespace

NeighborTable topk_all(const EmbeddingBank& bank, Index k_max, std::int64_t epoch_stamp) {
    const Index n = bank.size();
    if (k_max < 1 || k_max >= n) {
        throw ConfigError("topk_all: k_max must satisfy 1 <= k_max <= n-1 (k_max=" + std::to_string(k_max) +
                          ", n=" + std::to_string(n) + ")");
    }
    // D x n copy so the scan over candidates is contiguous
    const Matrix columns = bank.vectors().transpose();
    std::vector<Neighbor> entries(n * k_max);
    const Index tiles = (n + kAnchorTile - 1) / kAnchorTile;
    parallel_for(tiles, 4, [&](std::size_t begin, std::size_t end) {
        std::vector<double> sims(kAnchorTile * n);
        RowSelector selector;
        for (std::size_t tile = begin; tile < end; ++tile) {
            const Index first = tile * kAnchorTile;
            const Index count = std::min(kAnchorTile, n - first);
            scan_similarities(bank.vectors(), first, count, columns.data(), n, sims.data());
            for (Index a = 0; a < count; ++a) {
                selector.select(sims.data() + a * n, n, first + a, k_max, entries.data() + (first + a) * k_max);
            }
        }
    });
    return NeighborTable(n, k_max, std::move(entries), epoch_stamp);
}

std::vector<Neighbor> topk_query(const EmbeddingBank& bank, std::span<const double> v, Index k,
                                 const std::unordered_set<Index>& exclude) {
    if (v.size() != bank.dim()) throw ShapeError("topk_query: query dimension mismatch");
    std::vector<Neighbor> candidates;
    candidates.reserve(bank.size());
    for (Index j = 0; j < bank.size(); ++j) {
        if (!exclude.contains(j)) candidates.push_back({j, similarity(v, bank.row(j))});
    }
    if (k > candidates.size()) {
        throw ConfigError("topk_query: k=" + std::to_string(k) + " exceeds the " + std::to_string(candidates.size()) +
                          " eligible rows");
    }
    select_top(candidates, k);
    return candidates;
}

void write_neighbors(std::ostream& out, const NeighborTable& table) {
    const auto precision = out.precision(9);
    for (Index i = 0; i < table.size(); ++i) {
        out << i << ':';
        for (const auto& nb : table.neighbors(i)) out << ' ' << nb.index << ':' << nb.similarity;
        out << '\n';
    }
    out.precision(precision);
}

}  // namespace invp
