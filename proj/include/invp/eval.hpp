#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "invp/types.hpp"

namespace invp {

std::vector<int> knn_predict(const Matrix& train, std::span<const int> train_labels, const Matrix& test, Index K);

// Majority vote over the K most cosine-similar training rows. Vote ties go
// to the class with the smallest summed rank, then the smallest class id.
double knn_classify(const Matrix& train, std::span<const int> train_labels, const Matrix& test,
                    std::span<const int> test_labels, Index K);

struct ProbeConfig {
    long epochs = 100;
    double learning_rate = 0.1;
    double momentum = 0.9;
    double weight_decay = 0.0;
    Index batch_size = 64;
    std::uint64_t seed = 0;
};

struct ProbeResult {
    double train_accuracy = 0.0;
    double test_accuracy = 0.0;
};

// Affine softmax classifier on frozen features, momentum SGD with cosine decay.
ProbeResult linear_probe(const Matrix& train, std::span<const int> train_labels, const Matrix& test,
                         std::span<const int> test_labels, const ProbeConfig& config = {});

struct SimilarityStats {
    static constexpr double bin_width = 0.05;
    static constexpr int bins = 40;  // over [-1, 1]

    std::vector<double> same_class_sims;
    std::vector<double> cross_class_sims;
    double same_mean = 0.0;
    double cross_mean = 0.0;
    std::vector<double> same_hist;  // normalized masses
    std::vector<double> cross_hist;
    double overlap_coefficient = 0.0;
    Index anchors_used = 0;
    Index anchors_skipped = 0;
};

// For every anchor: its per_anchor most similar same-class rows, and its
// per_anchor most similar rows from a seeded random pool of neg_pool
// rows of other classes. Anchors whose class is too small are skipped.
SimilarityStats similarity_stats(const Matrix& features, std::span<const int> labels, Index per_anchor = 5,
                                 Index neg_pool = 1500, std::uint64_t seed = 0);

void write_similarity_stats(std::ostream& out, const SimilarityStats& stats);

struct StrategyResult {
    std::string strategy;
    double accuracy = 0.0;
    std::uint64_t data_hash = 0;
    std::uint64_t seed = 0;
};

struct AblationReport {
    std::vector<StrategyResult> rows;
    std::string table;  // aligned plain text
    std::string json;   // machine-readable record
};

AblationReport ablation_report(const std::vector<StrategyResult>& results);

}  // namespace invp
