#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "invp/bank.hpp"
#include "invp/encoder.hpp"
#include "invp/mining.hpp"
#include "invp/objective.hpp"
#include "invp/neighbors.hpp"

namespace invp {

enum class Strategy { invp, knn_baseline, no_hard_positive, no_hard_negative };
enum class Head { linear, mlp };

std::string to_string(Strategy s);
Strategy parse_strategy(const std::string& name);
std::string to_string(Head h);
Head parse_head(const std::string& name);

struct TrainConfig {
    Index k = 4;
    Index l = 3;
    Index P = 50;
    Index M = 4096;  // clamped to n - 1
    std::optional<double> tau;  // unset: 0.07 for the linear head, 0.2 for the MLP head
    double lambda_inv = 0.6;
    long T_ramp = 30;
    bool T_ramp_auto = false;  // max(1, round(0.15 * epochs))
    Index batch_size = 128;
    long epochs = 200;
    double bank_momentum = 0.5;
    OptimizerConfig optimizer;
    Strategy strategy = Strategy::invp;
    BackgroundMode background_mode = BackgroundMode::approximate_background;
    Index knn_K = 0;  // knn_baseline positive count; 0 means P
    Index embedding_dim = 128;
    std::vector<Index> hidden = {256, 256};
    Head head = Head::linear;
    bool standardize = true;
    std::uint64_t seed = 0;

    double effective_tau() const;
    long effective_T_ramp() const;
    Index effective_M(Index n) const;
    Index effective_knn_K() const;
    std::vector<Index> encoder_widths(Index input_dim) const;
    LossConfig loss_config() const;

    // Throws ConfigError naming the offending field.
    void validate(Index n) const;
};

struct EpochReport {
    long epoch = 0;
    double loss_total = 0.0;
    double loss_ins = 0.0;
    double loss_inv = 0.0;
    double mean_positives = 0.0;
    double mean_hard_positives = 0.0;
    double wall_seconds = 0.0;
    int ramp = 0;
    double learning_rate = 0.0;
    Index mined_anchors = 0;     // anchors that went through discovery and mining
    Index fallback_anchors = 0;  // anchors with no positives (instance loss only)
};

// Seeds for each subsystem, all derived from TrainConfig::seed.
enum SeedStream : std::uint64_t { seed_bank = 1, seed_encoder = 2, seed_shuffle = 3, seed_data = 4, seed_eval = 5 };

// Drives training one epoch at a time. Only unlabeled inputs are accepted.
class Trainer {
public:
    Trainer(Matrix inputs, TrainConfig config);

    // Runs epoch() + 1. No-op returning nullopt once config.epochs is reached.
    std::optional<EpochReport> run_epoch();
    std::vector<EpochReport> run();

    long completed_epochs() const { return completed_; }
    const TrainConfig& config() const { return config_; }
    const EncoderState& encoder() const { return encoder_; }
    const EmbeddingBank& bank() const { return bank_; }
    const NeighborTable& last_table() const { return table_; }

    // Writes encoder.ivpe, bank.ivpb (float64 versions) and progress.json.
    void save_checkpoint(const std::filesystem::path& dir) const;
    static Trainer resume(const std::filesystem::path& dir, Matrix inputs, TrainConfig config);

private:
    Matrix inputs_;
    TrainConfig config_;
    EncoderState encoder_;
    EmbeddingBank bank_;
    NeighborTable table_;
    long completed_ = 0;
};

struct TrainResult {
    EncoderState encoder;
    EmbeddingBank bank;
    std::vector<EpochReport> reports;
};

TrainResult train(const Matrix& inputs, const TrainConfig& config,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

// One newline-delimited JSON record; wall time is omitted so that records
// are reproducible byte for byte.
std::string metrics_record(const EpochReport& report);

}  // namespace invp
