#pragma once

#include <span>
#include <vector>

#include "invp/bank.hpp"
#include "invp/discovery.hpp"

namespace invp {

enum class BackgroundMode { approximate_background, exact_background };

struct MinedSets {
    Index anchor = 0;
    std::vector<Index> positives;       // full positive set, ascending
    std::vector<Index> hard_positives;  // ascending similarity to the anchor
    std::vector<Index> negatives;       // ascending; empty in approximate mode
    std::vector<Index> background;      // ascending
    BackgroundMode mode = BackgroundMode::approximate_background;
};

// The min(P, |members|) positives least similar to anchor_feature. Throws
// MiningError when the positive set is empty.
std::vector<Index> hard_positives(const EmbeddingBank& bank, std::span<const double> anchor_feature,
                                  const PositiveSet& pos, Index P);

// Same, using the anchor's bank row as its feature.
std::vector<Index> hard_positives(const EmbeddingBank& bank, Index anchor, const PositiveSet& pos, Index P);

MinedSets build_background(const NeighborTable& table, Index anchor, const PositiveSet& pos,
                           std::span<const Index> hard_pos, Index M, BackgroundMode mode);

}  // namespace invp
