#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "invp/types.hpp"

namespace invp {

struct Dataset {
    Matrix inputs;
    std::optional<std::vector<int>> labels;  // evaluation only
    std::string name;
    std::uint64_t seed = 0;

    Index size() const { return static_cast<Index>(inputs.rows()); }
    Index dim() const { return static_cast<Index>(inputs.cols()); }
    int num_classes() const;
};

// Isotropic unit-variance clusters whose means are pairwise at least
// `separation` apart.
Dataset gen_gaussian_mixture(Index classes, Index per_class, Index dim, double separation, std::uint64_t seed);

struct ManifoldCertificate {
    double confused_fraction = 0.0;  // far Euclidean neighbor crosses, local graph pure
    double pure_k1_fraction = 0.0;
};

// Two interleaved half circles in a random plane of R^dim with isotropic
// noise. Throws GenerationError if the confusion property is not met.
Dataset gen_two_manifolds(Index per_class, Index dim, double gap, double noise, std::uint64_t seed,
                          ManifoldCertificate* certificate = nullptr);

// Measures the property gen_two_manifolds asserts.
ManifoldCertificate certify_two_manifolds(const Dataset& data, Index far_rank, Index k);

// IDX files: 0x00000803 (u8 images, flattened and scaled to [0,1]) or
// 0x00000801 (u8 labels, returned in Dataset::labels with an empty matrix).
Dataset load_idx(const std::filesystem::path& path);

// Images plus a matching label file.
Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels);

// Comma-separated numeric rows; with label_column the last column becomes labels.
Dataset load_table(const std::filesystem::path& path, bool label_column);

// Stable content hash of inputs and labels (FNV-1a over the raw bytes).
std::uint64_t content_hash(const Dataset& data);

}  // namespace invp
