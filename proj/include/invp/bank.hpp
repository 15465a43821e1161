#pragma once

#include <cstdint>
#include <filesystem>
#include <span>

#include "invp/types.hpp"

namespace invp {

// Memory bank: one unit-norm feature per training sample, refreshed by an
// exponential moving average of the features the encoder computes.
//
// Rows are kept at unit L2 norm (to 1e-9) after construction and after
// every update, so inner products between a query and a row are cosines.
// Concurrent readers are safe; updates need exclusive access.
class EmbeddingBank {
public:
    EmbeddingBank() = default;

    // Rows drawn from an isotropic Gaussian and normalized. Deterministic in seed.
    static EmbeddingBank random(Index n, Index dim, std::uint64_t seed, double momentum = 0.5);

    // Adopts an existing matrix; every row must already be unit norm (1e-6).
    static EmbeddingBank from_rows(Matrix rows, double momentum = 0.5);

    Index size() const { return static_cast<Index>(vectors_.rows()); }
    Index dim() const { return static_cast<Index>(vectors_.cols()); }
    double momentum() const { return momentum_; }
    std::uint64_t seed() const { return seed_; }

    std::span<const double> row(Index i) const;
    const Matrix& vectors() const { return vectors_; }

    // row_i <- normalize(momentum * row_i + (1 - momentum) * v). Returns
    // false when the blend collapses to ~0 and the previous row was kept.
    bool update_entry(Index i, std::span<const double> v);

    // Copies of the requested rows in the requested order.
    Matrix read_rows(std::span<const Index> indices) const;

    // Binary persistence. Version 1 stores float32 rows (the interchange
    // format); version 2 stores float64 rows for exact resumption.
    void save(const std::filesystem::path& path, std::uint32_t version = 1) const;
    static EmbeddingBank load(const std::filesystem::path& path);

private:
    Matrix vectors_;
    double momentum_ = 0.5;
    std::uint64_t seed_ = 0;
};

EmbeddingBank init_bank(Index n, Index dim, std::uint64_t seed, double momentum = 0.5);

}  // namespace invp
