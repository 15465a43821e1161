#include "invp/mining.hpp"

#include <algorithm>

#include "invp/error.hpp"
#include "invp/neighbors.hpp"

namespace invp {

std::vector<Index> hard_positives(const EmbeddingBank& bank, std::span<const double> anchor_feature,
                                  const PositiveSet& pos, Index P) {
    if (P == 0) throw ConfigError("hard_positives: P must be at least 1");
    if (pos.members.empty()) {
        throw MiningError("hard_positives: anchor " + std::to_string(pos.anchor) + " has no positives");
    }
    std::vector<Neighbor> scored;
    scored.reserve(pos.members.size());
    for (Index j : pos.members) scored.push_back({j, similarity(anchor_feature, bank.row(j))});
    // ascending similarity, ascending index on ties
    auto least_similar = [](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity < b.similarity;
        return a.index < b.index;
    };
    const Index take = std::min<Index>(P, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), least_similar);
    std::vector<Index> out;
    out.reserve(take);
    for (Index r = 0; r < take; ++r) out.push_back(scored[r].index);
    return out;
}

std::vector<Index> hard_positives(const EmbeddingBank& bank, Index anchor, const PositiveSet& pos, Index P) {
    return hard_positives(bank, bank.row(anchor), pos, P);
}

MinedSets build_background(const NeighborTable& table, Index anchor, const PositiveSet& pos,
                           std::span<const Index> hard_pos, Index M, BackgroundMode mode) {
    if (M > table.k_max()) {
        throw ConfigError("build_background: M=" + std::to_string(M) + " exceeds table k_max=" + std::to_string(table.k_max()));
    }
    MinedSets out;
    out.anchor = anchor;
    out.positives = pos.members;
    out.hard_positives.assign(hard_pos.begin(), hard_pos.end());
    out.mode = mode;

    std::vector<Index> prefix;
    prefix.reserve(M);
    for (const auto& nb : table.prefix(anchor, M)) prefix.push_back(nb.index);
    std::sort(prefix.begin(), prefix.end());

    std::vector<Index> hard_sorted(hard_pos.begin(), hard_pos.end());
    std::sort(hard_sorted.begin(), hard_sorted.end());

    if (mode == BackgroundMode::exact_background) {
        std::vector<Index> members = pos.members;
        std::sort(members.begin(), members.end());
        std::set_difference(prefix.begin(), prefix.end(), members.begin(), members.end(), std::back_inserter(out.negatives));
        std::set_union(out.negatives.begin(), out.negatives.end(), hard_sorted.begin(), hard_sorted.end(),
                       std::back_inserter(out.background));
    } else {
        std::set_union(prefix.begin(), prefix.end(), hard_sorted.begin(), hard_sorted.end(), std::back_inserter(out.background));
    }
    return out;
}

}  // namespace invp
