#pragma once

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "invp/bank.hpp"
#include "invp/neighbors.hpp"
#include "invp/types.hpp"

namespace invp::testing {

using High = boost::multiprecision::cpp_bin_float_50;

inline Matrix random_unit_rows(Index n, Index dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Matrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index d = 0; d < m.cols(); ++d) m(i, d) = gauss(rng);
        m.row(i) /= m.row(i).norm();
    }
    return m;
}

inline std::vector<double> random_unit(Index dim, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    std::vector<double> v(dim);
    double s = 0.0;
    for (double& x : v) {
        x = gauss(rng);
        s += x * x;
    }
    for (double& x : v) x /= std::sqrt(s);
    return v;
}

inline High high_dot(std::span<const double> u, std::span<const double> v) {
    High s = 0;
    for (std::size_t d = 0; d < u.size(); ++d) s += High(u[d]) * High(v[d]);
    return s;
}

// Full descending sort of every other row, the naive reference for top-k.
inline std::vector<Neighbor> sorted_neighbors(const EmbeddingBank& bank, Index anchor) {
    std::vector<Neighbor> all;
    for (Index j = 0; j < bank.size(); ++j) {
        if (j != anchor) all.push_back({j, similarity(bank.row(anchor), bank.row(j))});
    }
    std::sort(all.begin(), all.end(), ranks_before);
    return all;
}

// Bank with many exactly repeated rows, so similarities tie.
inline EmbeddingBank tied_bank(Index n, Index dim, std::uint64_t seed) {
    Matrix m = random_unit_rows(n, dim, seed);
    for (Index i = 0; i < n; i += 3) m.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>((i * 7 + 1) % n));
    return EmbeddingBank::from_rows(m);
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

inline std::filesystem::path scratch_dir(const std::string& name) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path() /
               ("invp_test_" + name + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::vector<std::string> lines_of(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace invp::testing
