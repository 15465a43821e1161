#include "invp/bank.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "invp/error.hpp"
#include "invp/log.hpp"

namespace invp {

namespace {

constexpr char kMagic[4] = {'I', 'V', 'P', 'B'};

double norm_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace

EmbeddingBank EmbeddingBank::random(Index n, Index dim, std::uint64_t seed, double momentum) {
    if (n == 0) throw ConfigError("bank: n must be at least 1");
    if (dim < 2) throw ConfigError("bank: D must be at least 2");
    if (!(momentum >= 0.0 && momentum <= 1.0)) throw ConfigError("bank: momentum must lie in [0, 1]");
    EmbeddingBank bank;
    bank.vectors_.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    bank.momentum_ = momentum;
    bank.seed_ = seed;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Index i = 0; i < n; ++i) {
        auto row = row_span(bank.vectors_, static_cast<Eigen::Index>(i));
        double nrm = 0.0;
        // a zero draw is possible in principle; redraw until usable
        while (nrm < 1e-12) {
            for (double& x : row) x = gauss(rng);
            nrm = norm_of(row);
        }
        for (double& x : row) x /= nrm;
    }
    return bank;
}

EmbeddingBank EmbeddingBank::from_rows(Matrix rows, double momentum) {
    if (rows.rows() == 0) throw ConfigError("bank: n must be at least 1");
    if (rows.cols() < 2) throw ConfigError("bank: D must be at least 2");
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const double nrm = norm_of(row_span(rows, i));
        if (!std::isfinite(nrm) || std::abs(nrm - 1.0) > 1e-6) {
            throw NumericError("bank: row " + std::to_string(i) + " is not unit norm");
        }
        rows.row(i) /= nrm;
    }
    EmbeddingBank bank;
    bank.vectors_ = std::move(rows);
    bank.momentum_ = momentum;
    return bank;
}

EmbeddingBank init_bank(Index n, Index dim, std::uint64_t seed, double momentum) {
    return EmbeddingBank::random(n, dim, seed, momentum);
}

std::span<const double> EmbeddingBank::row(Index i) const {
    if (i >= size()) throw BoundsError("bank: row " + std::to_string(i) + " out of range (n=" + std::to_string(size()) + ")");
    return row_span(vectors_, static_cast<Eigen::Index>(i));
}

bool EmbeddingBank::update_entry(Index i, std::span<const double> v) {
    if (i >= size()) throw BoundsError("bank: update index " + std::to_string(i) + " out of range (n=" + std::to_string(size()) + ")");
    if (v.size() != dim()) throw ShapeError("bank: update vector has dimension " + std::to_string(v.size()));
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("bank: update vector is not finite");
    }
    if (std::abs(norm_of(v) - 1.0) > 1e-6) throw ContractError("bank: update vector is not unit norm");

    auto row = row_span(vectors_, static_cast<Eigen::Index>(i));
    std::vector<double> blended(row.size());
    for (std::size_t d = 0; d < row.size(); ++d) blended[d] = momentum_ * row[d] + (1.0 - momentum_) * v[d];
    const double nrm = norm_of(blended);
    if (nrm < 1e-12) {
        log::warning("bank: EMA of row " + std::to_string(i) + " collapsed to zero; keeping previous value");
        return false;
    }
    for (std::size_t d = 0; d < row.size(); ++d) row[d] = blended[d] / nrm;
    return true;
}

Matrix EmbeddingBank::read_rows(std::span<const Index> indices) const {
    Matrix out(static_cast<Eigen::Index>(indices.size()), vectors_.cols());
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= size()) throw BoundsError("bank: read index " + std::to_string(indices[r]) + " out of range");
        out.row(static_cast<Eigen::Index>(r)) = vectors_.row(static_cast<Eigen::Index>(indices[r]));
    }
    return out;
}

void EmbeddingBank::save(const std::filesystem::path& path, std::uint32_t version) const {
    if (version != 1 && version != 2) throw ConfigError("bank: unknown format version " + std::to_string(version));
    detail::BinaryWriter w(path);
    w.bytes(kMagic, 4);
    w.put<std::uint32_t>(version);
    w.put<std::uint64_t>(size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(dim()));
    w.put<double>(momentum_);
    const Eigen::Index total = vectors_.size();
    for (Eigen::Index k = 0; k < total; ++k) {
        if (version == 1) {
            w.put<float>(static_cast<float>(vectors_.data()[k]));
        } else {
            w.put<double>(vectors_.data()[k]);
        }
    }
    w.finish();
}

EmbeddingBank EmbeddingBank::load(const std::filesystem::path& path) {
    detail::BinaryReader r(path, "bank");
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != std::string(kMagic, 4)) throw FormatError("bank: bad magic at byte offset 0");
    const auto version = r.get<std::uint32_t>();
    if (version != 1 && version != 2) throw FormatError("bank: unsupported version " + std::to_string(version) + " at byte offset 4");
    const auto n = r.get<std::uint64_t>();
    const auto dim = r.get<std::uint32_t>();
    const auto momentum = r.get<double>();
    const std::size_t scalar = version == 1 ? sizeof(float) : sizeof(double);
    if (n == 0 || dim < 2) throw FormatError("bank: invalid shape in header");
    r.require(n * dim * scalar);
    Matrix rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index k = 0; k < rows.size(); ++k) {
        rows.data()[k] = version == 1 ? static_cast<double>(r.get<float>()) : r.get<double>();
    }
    if (r.remaining() != 0) throw FormatError("bank: trailing bytes at offset " + std::to_string(r.offset()));
    // float32 rows carry ~1e-7 rounding; anything worse is corruption
    const double tolerance = version == 1 ? 1e-5 : 1e-9;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const double nrm = norm_of(row_span(rows, i));
        if (!std::isfinite(nrm) || std::abs(nrm - 1.0) > tolerance) {
            throw FormatError("bank: row " + std::to_string(i) + " fails the unit-norm check");
        }
        if (version == 1) rows.row(i) /= nrm;
    }
    EmbeddingBank bank;
    bank.vectors_ = std::move(rows);
    bank.momentum_ = momentum;
    return bank;
}

}  // namespace invp
