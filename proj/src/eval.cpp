#include "invp/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "invp/error.hpp"
#include "invp/log.hpp"
#include "invp/neighbors.hpp"
#include "invp/parallel.hpp"

namespace invp {

namespace {

void check_labeled(const Matrix& features, std::span<const int> labels, const char* what) {
    if (static_cast<std::size_t>(features.rows()) != labels.size()) {
        throw ShapeError(std::string(what) + ": " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(features.rows()) + " feature rows");
    }
    for (int y : labels) {
        if (y < 0) throw ShapeError(std::string(what) + ": negative class id");
    }
}

int class_count(std::span<const int> labels) {
    return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

}  // namespace

std::vector<int> knn_predict(const Matrix& train, std::span<const int> train_labels, const Matrix& test, Index K) {
    check_labeled(train, train_labels, "knn_classify");
    if (train.cols() != test.cols()) throw ShapeError("knn_classify: feature width mismatch");
    if (K < 1 || K > static_cast<Index>(train.rows())) throw ConfigError("knn_classify: K_eval must lie in [1, |train|]");
    const int classes = class_count(train_labels);
    std::vector<int> predictions(static_cast<std::size_t>(test.rows()));
    parallel_for(static_cast<std::size_t>(test.rows()), 16, [&](std::size_t begin, std::size_t end) {
        std::vector<Neighbor> candidates(static_cast<std::size_t>(train.rows()));
        std::vector<Index> votes(static_cast<std::size_t>(classes));
        std::vector<Index> rank_sum(static_cast<std::size_t>(classes));
        for (std::size_t q = begin; q < end; ++q) {
            const auto query = row_span(test, static_cast<Eigen::Index>(q));
            for (Eigen::Index j = 0; j < train.rows(); ++j) {
                candidates[static_cast<std::size_t>(j)] = {static_cast<Index>(j), similarity(query, row_span(train, j))};
            }
            std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(K), candidates.end(), ranks_before);
            std::fill(votes.begin(), votes.end(), 0);
            std::fill(rank_sum.begin(), rank_sum.end(), 0);
            for (Index r = 0; r < K; ++r) {
                const int y = train_labels[candidates[r].index];
                ++votes[static_cast<std::size_t>(y)];
                rank_sum[static_cast<std::size_t>(y)] += r + 1;
            }
            int best = -1;
            for (int c = 0; c < classes; ++c) {
                const auto cu = static_cast<std::size_t>(c);
                if (votes[cu] == 0) continue;
                if (best < 0) {
                    best = c;
                    continue;
                }
                const auto bu = static_cast<std::size_t>(best);
                if (votes[cu] > votes[bu] || (votes[cu] == votes[bu] && rank_sum[cu] < rank_sum[bu])) best = c;
            }
            predictions[q] = best;
        }
    });
    return predictions;
}

double knn_classify(const Matrix& train, std::span<const int> train_labels, const Matrix& test,
                    std::span<const int> test_labels, Index K) {
    check_labeled(test, test_labels, "knn_classify");
    const auto predictions = knn_predict(train, train_labels, test, K);
    if (predictions.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t q = 0; q < predictions.size(); ++q) correct += predictions[q] == test_labels[q];
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

ProbeResult linear_probe(const Matrix& train, std::span<const int> train_labels, const Matrix& test,
                         std::span<const int> test_labels, const ProbeConfig& config) {
    check_labeled(train, train_labels, "linear_probe");
    check_labeled(test, test_labels, "linear_probe");
    if (train.cols() != test.cols()) throw ShapeError("linear_probe: feature width mismatch");
    if (train.rows() == 0) throw ConfigError("linear_probe: empty training set");
    const int classes = class_count(train_labels);
    if (class_count(test_labels) > classes) throw ConfigError("linear_probe: test set has classes absent from training");
    if (classes < 2) throw ConfigError("linear_probe: need at least two classes");

    const Eigen::Index dim = train.cols();
    Matrix weight = Matrix::Zero(dim, classes);
    Vector bias = Vector::Zero(classes);
    Matrix weight_buf = Matrix::Zero(dim, classes);
    Vector bias_buf = Vector::Zero(classes);

    const auto n = static_cast<std::size_t>(train.rows());
    const Index batch = std::max<Index>(1, std::min<Index>(config.batch_size, n));
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(config.seed);

    for (long epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = 0.5 * config.learning_rate *
                          (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(config.epochs)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < n; start += batch) {
            const std::size_t count = std::min<std::size_t>(batch, n - start);
            Matrix x(static_cast<Eigen::Index>(count), dim);
            for (std::size_t r = 0; r < count; ++r) x.row(static_cast<Eigen::Index>(r)) = train.row(static_cast<Eigen::Index>(order[start + r]));
            Matrix logits = x * weight;
            logits.rowwise() += bias.transpose();
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                const double peak = logits.row(r).maxCoeff();
                logits.row(r) = (logits.row(r).array() - peak).exp();
                logits.row(r) /= logits.row(r).sum();
                logits(r, train_labels[order[start + static_cast<std::size_t>(r)]]) -= 1.0;
            }
            logits /= static_cast<double>(count);
            const Matrix grad_w = x.transpose() * logits + config.weight_decay * weight;
            const Vector grad_b = logits.colwise().sum().transpose();
            weight_buf = config.momentum * weight_buf + grad_w;
            bias_buf = config.momentum * bias_buf + grad_b;
            weight -= lr * weight_buf;
            bias -= lr * bias_buf;
        }
    }

    auto accuracy = [&](const Matrix& features, std::span<const int> labels) {
        if (features.rows() == 0) return 0.0;
        Matrix logits = features * weight;
        logits.rowwise() += bias.transpose();
        std::size_t correct = 0;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            Eigen::Index arg = 0;
            logits.row(r).maxCoeff(&arg);
            correct += static_cast<int>(arg) == labels[static_cast<std::size_t>(r)];
        }
        return static_cast<double>(correct) / static_cast<double>(features.rows());
    };
    return {accuracy(train, train_labels), accuracy(test, test_labels)};
}

SimilarityStats similarity_stats(const Matrix& features, std::span<const int> labels, Index per_anchor, Index neg_pool,
                                 std::uint64_t seed) {
    check_labeled(features, labels, "similarity_stats");
    if (per_anchor < 1) throw ConfigError("similarity_stats: per_anchor must be at least 1");
    const auto n = static_cast<std::size_t>(features.rows());

    struct AnchorSims {
        bool used = false;
        std::vector<double> same;
        std::vector<double> cross;
    };
    std::vector<AnchorSims> per(n);
    parallel_for(n, 16, [&](std::size_t begin, std::size_t end) {
        std::vector<double> same;
        std::vector<Index> others;
        std::vector<double> cross;
        for (std::size_t i = begin; i < end; ++i) {
            const auto anchor = row_span(features, static_cast<Eigen::Index>(i));
            same.clear();
            others.clear();
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                if (labels[j] == labels[i]) {
                    same.push_back(similarity(anchor, row_span(features, static_cast<Eigen::Index>(j))));
                } else {
                    others.push_back(j);
                }
            }
            if (same.size() < per_anchor || others.size() < per_anchor) continue;
            // seeded partial shuffle picks the cross-class pool
            std::mt19937_64 rng(derive_seed(seed, 0x51u, i));
            const std::size_t pool = std::min<std::size_t>(neg_pool, others.size());
            for (std::size_t p = 0; p < pool; ++p) {
                std::uniform_int_distribution<std::size_t> pick(p, others.size() - 1);
                std::swap(others[p], others[pick(rng)]);
            }
            if (pool < per_anchor) continue;
            cross.clear();
            for (std::size_t p = 0; p < pool; ++p) cross.push_back(similarity(anchor, row_span(features, static_cast<Eigen::Index>(others[p]))));
            auto top = [per_anchor](std::vector<double>& v) {
                std::partial_sort(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(per_anchor), v.end(), std::greater<>());
                return std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(per_anchor));
            };
            per[i].used = true;
            per[i].same = top(same);
            per[i].cross = top(cross);
        }
    });

    SimilarityStats stats;
    stats.same_hist.assign(SimilarityStats::bins, 0.0);
    stats.cross_hist.assign(SimilarityStats::bins, 0.0);
    for (auto& a : per) {
        if (!a.used) {
            ++stats.anchors_skipped;
            continue;
        }
        ++stats.anchors_used;
        stats.same_class_sims.insert(stats.same_class_sims.end(), a.same.begin(), a.same.end());
        stats.cross_class_sims.insert(stats.cross_class_sims.end(), a.cross.begin(), a.cross.end());
    }
    if (stats.anchors_skipped) {
        log::info("similarity_stats: skipped " + std::to_string(stats.anchors_skipped) + " anchors with too few candidates");
    }
    auto bin_of = [](double s) {
        const int b = static_cast<int>(std::floor((s + 1.0) / SimilarityStats::bin_width));
        return std::clamp(b, 0, SimilarityStats::bins - 1);
    };
    auto fill = [&](const std::vector<double>& sims, std::vector<double>& hist, double& mean) {
        if (sims.empty()) return;
        for (double s : sims) hist[static_cast<std::size_t>(bin_of(s))] += 1.0;
        for (double& h : hist) h /= static_cast<double>(sims.size());
        mean = std::accumulate(sims.begin(), sims.end(), 0.0) / static_cast<double>(sims.size());
    };
    fill(stats.same_class_sims, stats.same_hist, stats.same_mean);
    fill(stats.cross_class_sims, stats.cross_hist, stats.cross_mean);
    if (stats.anchors_used) {
        for (int b = 0; b < SimilarityStats::bins; ++b) {
            stats.overlap_coefficient += std::min(stats.same_hist[static_cast<std::size_t>(b)], stats.cross_hist[static_cast<std::size_t>(b)]);
        }
        stats.overlap_coefficient = std::clamp(stats.overlap_coefficient, 0.0, 1.0);
    }
    return stats;
}

void write_similarity_stats(std::ostream& out, const SimilarityStats& stats) {
    nlohmann::ordered_json j;
    j["bin_width"] = SimilarityStats::bin_width;
    std::vector<double> lower;
    for (int b = 0; b < SimilarityStats::bins; ++b) lower.push_back(-1.0 + b * SimilarityStats::bin_width);
    j["bin_lower_edges"] = lower;
    j["same_class_mass"] = stats.same_hist;
    j["cross_class_mass"] = stats.cross_hist;
    j["same_class_mean"] = stats.same_mean;
    j["cross_class_mean"] = stats.cross_mean;
    j["overlap_coefficient"] = stats.overlap_coefficient;
    j["anchors_used"] = stats.anchors_used;
    j["anchors_skipped"] = stats.anchors_skipped;
    out << j.dump(2) << '\n';
}

namespace {

// ImageNet linear accuracy for the four variants, 200 epochs, ResNet-50.
const std::map<std::string, double>& reference_accuracy() {
    static const std::map<std::string, double> ref{
        {"invp", 63.3}, {"no_hard_negative", 61.9}, {"no_hard_positive", 60.7}, {"knn_baseline", 57.6}};
    return ref;
}

}  // namespace

AblationReport ablation_report(const std::vector<StrategyResult>& results) {
    if (results.size() < 2) throw ComparisonError("ablation: need at least two strategies to compare");
    std::set<std::string> names;
    for (const auto& r : results) {
        if (!names.insert(r.strategy).second) throw ComparisonError("ablation: duplicate strategy '" + r.strategy + "'");
        if (r.data_hash != results.front().data_hash) throw ComparisonError("ablation: strategy '" + r.strategy + "' used different data");
        if (r.seed != results.front().seed) throw ComparisonError("ablation: strategy '" + r.strategy + "' used a different seed");
    }
    AblationReport report;
    report.rows = results;
    std::stable_sort(report.rows.begin(), report.rows.end(),
                     [](const StrategyResult& a, const StrategyResult& b) { return a.accuracy > b.accuracy; });

    const auto& ref = reference_accuracy();
    std::ostringstream table;
    table << std::left << std::setw(20) << "strategy" << std::right << std::setw(12) << "accuracy" << std::setw(16)
          << "gap_to_best" << std::setw(18) << "reference*" << '\n';
    const double best = report.rows.front().accuracy;
    nlohmann::ordered_json json;
    json["seed"] = results.front().seed;
    json["data_hash"] = results.front().data_hash;
    nlohmann::ordered_json rows = nlohmann::ordered_json::array();
    for (const auto& r : report.rows) {
        table << std::left << std::setw(20) << r.strategy << std::right << std::fixed << std::setprecision(2) << std::setw(12)
              << 100.0 * r.accuracy << std::setw(16) << 100.0 * (r.accuracy - best);
        const auto it = ref.find(r.strategy);
        if (it != ref.end()) {
            table << std::setw(18) << it->second;
        } else {
            table << std::setw(18) << "-";
        }
        table << '\n';
        nlohmann::ordered_json row;
        row["strategy"] = r.strategy;
        row["accuracy"] = r.accuracy;
        if (it != ref.end()) row["reference_accuracy"] = it->second;
        rows.push_back(row);
    }
    // pairwise agreement with the reference ordering
    std::size_t agree = 0, pairs = 0;
    for (std::size_t a = 0; a < results.size(); ++a) {
        for (std::size_t b = a + 1; b < results.size(); ++b) {
            const auto ra = ref.find(results[a].strategy);
            const auto rb = ref.find(results[b].strategy);
            if (ra == ref.end() || rb == ref.end()) continue;
            ++pairs;
            agree += (results[a].accuracy > results[b].accuracy) == (ra->second > rb->second);
        }
    }
    table << "ordering agreement with reference: " << agree << '/' << pairs << " pairs\n";
    table << "* reference: ImageNet linear top-1, ResNet-50, 200 epochs; not reproducible at this scale\n";
    json["rows"] = rows;
    json["reference_pairs_agreeing"] = agree;
    json["reference_pairs"] = pairs;
    json["reference_note"] = "ImageNet linear top-1, ResNet-50, 200 epochs; context only, not reproducible at this scale";
    report.table = table.str();
    report.json = json.dump(2);
    return report;
}

}  // namespace invp
