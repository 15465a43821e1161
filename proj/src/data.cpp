#include "invp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "binary_io.hpp"
#include "invp/error.hpp"

namespace invp {

int Dataset::num_classes() const {
    if (!labels || labels->empty()) return 0;
    return *std::max_element(labels->begin(), labels->end()) + 1;
}

namespace {

// Orthonormal columns spanning a random subspace of R^dim.
Matrix random_frame(Index dim, Index cols, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd g(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < g.size(); ++k) g.data()[k] = gauss(rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(g.rows(), g.cols());
    return q;
}

}  // namespace

Dataset gen_gaussian_mixture(Index classes, Index per_class, Index dim, double separation, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("gaussian mixture: classes must be at least 2");
    if (per_class < 10) throw ConfigError("gaussian mixture: per_class must be at least 10");
    if (dim < 1) throw ConfigError("gaussian mixture: dimension must be positive");
    if (separation < 0.0) throw ConfigError("gaussian mixture: separation must be non-negative");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // Means on scaled orthonormal directions sit exactly `separation` apart;
    // with more classes than dimensions fall back to rejection sampling.
    Matrix means(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
    if (classes <= dim) {
        const Matrix frame = random_frame(dim, classes, rng);
        means = frame.transpose() * (separation / std::numbers::sqrt2);
    } else {
        const double radius = separation * static_cast<double>(classes);
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            for (Eigen::Index k = 0; k < means.size(); ++k) means.data()[k] = gauss(rng);
            for (Eigen::Index c = 0; c < means.rows(); ++c) {
                const double nrm = means.row(c).norm();
                means.row(c) *= nrm > 0 ? radius / nrm : 0.0;
            }
            placed = true;
            for (Eigen::Index a = 0; a < means.rows() && placed; ++a) {
                for (Eigen::Index b = a + 1; b < means.rows(); ++b) {
                    if ((means.row(a) - means.row(b)).norm() < separation) {
                        placed = false;
                        break;
                    }
                }
            }
        }
        if (!placed) throw ConfigError("gaussian mixture: could not place class means at the requested separation");
    }

    Dataset data;
    data.name = "gauss";
    data.seed = seed;
    data.inputs.resize(static_cast<Eigen::Index>(classes * per_class), static_cast<Eigen::Index>(dim));
    data.labels.emplace();
    for (Index c = 0; c < classes; ++c) {
        for (Index s = 0; s < per_class; ++s) {
            const auto r = static_cast<Eigen::Index>(c * per_class + s);
            for (Index d = 0; d < dim; ++d) {
                data.inputs(r, static_cast<Eigen::Index>(d)) = means(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d)) + gauss(rng);
            }
            data.labels->push_back(static_cast<int>(c));
        }
    }
    return data;
}

ManifoldCertificate certify_two_manifolds(const Dataset& data, Index far_rank, Index k) {
    if (!data.labels) throw ConfigError("certificate: dataset has no labels");
    const Index n = data.size();
    if (far_rank == 0 || far_rank >= n || k == 0 || k >= n) throw ConfigError("certificate: ranks out of range");
    const auto& labels = *data.labels;
    Index confused = 0;
    Index pure_k1 = 0;
    std::vector<std::pair<double, Index>> dist(n - 1);
    for (Index i = 0; i < n; ++i) {
        Index m = 0;
        for (Index j = 0; j < n; ++j) {
            if (j == i) continue;
            dist[m++] = {(data.inputs.row(static_cast<Eigen::Index>(i)) - data.inputs.row(static_cast<Eigen::Index>(j))).squaredNorm(), j};
        }
        std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(far_rank - 1), dist.end());
        const bool far_crosses = labels[dist[far_rank - 1].second] != labels[i];
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        bool local_pure = true;
        for (Index r = 0; r < k; ++r) local_pure = local_pure && labels[dist[r].second] == labels[i];
        if (far_crosses && local_pure) ++confused;
        if (labels[dist[0].second] == labels[i]) ++pure_k1;
    }
    return {static_cast<double>(confused) / static_cast<double>(n), static_cast<double>(pure_k1) / static_cast<double>(n)};
}

Dataset gen_two_manifolds(Index per_class, Index dim, double gap, double noise, std::uint64_t seed,
                          ManifoldCertificate* certificate) {
    if (per_class < 100) throw ConfigError("two manifolds: per_class must be at least 100");
    if (dim < 2) throw ConfigError("two manifolds: dimension must be at least 2");
    if (!(gap > noise)) throw ConfigError("two manifolds: gap must exceed noise");
    if (noise < 0.0) throw ConfigError("two manifolds: noise must be non-negative");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const Matrix frame = random_frame(dim, 2, rng);

    // Upper arc centred at the origin and lower arc centred at (1, 1 - gap):
    // each arc's tips come within `gap` of the other arc.
    Dataset data;
    data.name = "moons";
    data.seed = seed;
    data.inputs.resize(static_cast<Eigen::Index>(2 * per_class), static_cast<Eigen::Index>(dim));
    data.labels.emplace();
    for (Index c = 0; c < 2; ++c) {
        for (Index s = 0; s < per_class; ++s) {
            const double t = angle(rng);
            Eigen::Vector2d p = c == 0 ? Eigen::Vector2d(std::cos(t), std::sin(t))
                                       : Eigen::Vector2d(1.0 - std::cos(t), (1.0 - gap) - std::sin(t));
            const auto r = static_cast<Eigen::Index>(c * per_class + s);
            data.inputs.row(r) = (frame * p).transpose();
            for (Eigen::Index d = 0; d < data.inputs.cols(); ++d) data.inputs(r, d) += noise * gauss(rng);
            data.labels->push_back(static_cast<int>(c));
        }
    }
    const auto cert = certify_two_manifolds(data, per_class, 4);
    if (certificate) *certificate = cert;
    if (cert.confused_fraction < 0.05) {
        throw GenerationError("two manifolds: only " + std::to_string(cert.confused_fraction * 100.0) +
                              "% of points are Euclidean-confused with a pure 4-NN graph (need 5%); adjust gap or noise");
    }
    return data;
}

namespace {

std::uint32_t read_be32(detail::BinaryReader& r) {
    unsigned char b[4];
    r.bytes(b, 4);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace

Dataset load_idx(const std::filesystem::path& path) {
    detail::BinaryReader r(path, "idx " + path.filename().string());
    const std::uint32_t magic = read_be32(r);
    std::uint32_t ndims = 0;
    if (magic == 0x00000803) {
        ndims = 3;
    } else if (magic == 0x00000801) {
        ndims = 1;
    } else {
        std::ostringstream msg;
        msg << "idx: unsupported magic 0x" << std::hex << magic << " at byte offset 0";
        throw FormatError(msg.str());
    }
    std::vector<std::uint64_t> dims;
    for (std::uint32_t d = 0; d < ndims; ++d) dims.push_back(read_be32(r));
    std::uint64_t payload = 1;
    for (auto d : dims) payload *= d;
    if (r.remaining() < payload) {
        throw FormatError("idx: truncated payload at byte offset " + std::to_string(r.offset()) + ": expected " +
                          std::to_string(payload) + " bytes, found " + std::to_string(r.remaining()));
    }
    std::vector<unsigned char> bytes(payload);
    if (payload) r.bytes(bytes.data(), payload);

    Dataset data;
    data.name = path.filename().string();
    if (ndims == 1) {
        data.labels.emplace(bytes.begin(), bytes.end());
        data.inputs.resize(static_cast<Eigen::Index>(dims[0]), 0);
        return data;
    }
    const auto rows = static_cast<Eigen::Index>(dims[0]);
    const auto cols = static_cast<Eigen::Index>(dims[1] * dims[2]);
    data.inputs.resize(rows, cols);
    for (Eigen::Index k = 0; k < data.inputs.size(); ++k) data.inputs.data()[k] = bytes[static_cast<std::size_t>(k)] / 255.0;
    return data;
}

Dataset load_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels) {
    Dataset data = load_idx(images);
    Dataset lab = load_idx(labels);
    if (!lab.labels || data.inputs.cols() == 0) throw FormatError("idx: expected an image file and a label file");
    if (lab.labels->size() != data.size()) {
        throw FormatError("idx: " + std::to_string(lab.labels->size()) + " labels for " + std::to_string(data.size()) + " images");
    }
    data.labels = std::move(lab.labels);
    return data;
}

Dataset load_table(const std::filesystem::path& path, bool label_column) {
    std::ifstream in(path);
    if (!in) throw FormatError("table: cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        std::vector<double> values;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            const auto first = field.find_first_not_of(" \t");
            const auto last = field.find_last_not_of(" \t");
            field = first == std::string::npos ? std::string() : field.substr(first, last - first + 1);
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
            if (field.empty() || ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value)) {
                throw FormatError("table: non-numeric field '" + field + "' on line " + std::to_string(line_no));
            }
            values.push_back(value);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (rows.empty()) {
            width = values.size();
        } else if (values.size() != width) {
            throw FormatError("table: line " + std::to_string(line_no) + " has " + std::to_string(values.size()) +
                              " fields, expected " + std::to_string(width));
        }
        rows.push_back(std::move(values));
    }
    if (rows.empty()) throw FormatError("table: empty dataset in " + path.string());
    if (label_column && width < 2) throw FormatError("table: a label column needs at least one feature column");

    Dataset data;
    data.name = path.filename().string();
    const std::size_t features = label_column ? width - 1 : width;
    data.inputs.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(features));
    if (label_column) data.labels.emplace();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (std::size_t c = 0; c < features; ++c) data.inputs(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        if (label_column) {
            const double label = rows[r].back();
            if (label < 0 || label != std::floor(label)) {
                throw FormatError("table: label on data row " + std::to_string(r + 1) + " is not a non-negative integer");
            }
            data.labels->push_back(static_cast<int>(label));
        }
    }
    return data;
}

std::uint64_t content_hash(const Dataset& data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](const void* p, std::size_t size) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t k = 0; k < size; ++k) {
            h ^= bytes[k];
            h *= 0x100000001b3ULL;
        }
    };
    const std::uint64_t shape[2] = {static_cast<std::uint64_t>(data.inputs.rows()), static_cast<std::uint64_t>(data.inputs.cols())};
    feed(shape, sizeof(shape));
    feed(data.inputs.data(), static_cast<std::size_t>(data.inputs.size()) * sizeof(double));
    if (data.labels) feed(data.labels->data(), data.labels->size() * sizeof(int));
    return h;
}

}  // namespace invp
