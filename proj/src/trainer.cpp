#include "invp/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "invp/discovery.hpp"
#include "invp/error.hpp"
#include "invp/log.hpp"
#include "invp/objective.hpp"
#include "invp/parallel.hpp"

namespace invp {

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::invp: return "invp";
        case Strategy::knn_baseline: return "knn_baseline";
        case Strategy::no_hard_positive: return "no_hard_positive";
        case Strategy::no_hard_negative: return "no_hard_negative";
    }
    return "invp";
}

Strategy parse_strategy(const std::string& name) {
    for (Strategy s : {Strategy::invp, Strategy::knn_baseline, Strategy::no_hard_positive, Strategy::no_hard_negative}) {
        if (to_string(s) == name) return s;
    }
    throw ConfigError("strategy: unknown value '" + name + "'");
}

std::string to_string(Head h) { return h == Head::linear ? "linear" : "mlp"; }

Head parse_head(const std::string& name) {
    if (name == "linear") return Head::linear;
    if (name == "mlp") return Head::mlp;
    throw ConfigError("head: unknown value '" + name + "'");
}

double TrainConfig::effective_tau() const { return tau.value_or(head == Head::mlp ? 0.2 : 0.07); }

long TrainConfig::effective_T_ramp() const {
    if (T_ramp_auto) return std::max(1L, std::lround(0.15 * static_cast<double>(epochs)));
    return T_ramp;
}

Index TrainConfig::effective_M(Index n) const { return std::min(M, n - 1); }

Index TrainConfig::effective_knn_K() const { return knn_K == 0 ? P : knn_K; }

std::vector<Index> TrainConfig::encoder_widths(Index input_dim) const {
    std::vector<Index> widths{input_dim};
    widths.insert(widths.end(), hidden.begin(), hidden.end());
    if (head == Head::mlp) widths.push_back(hidden.empty() ? embedding_dim : hidden.back());
    widths.push_back(embedding_dim);
    return widths;
}

LossConfig TrainConfig::loss_config() const {
    LossConfig lc;
    lc.tau = effective_tau();
    lc.lambda_inv = lambda_inv;
    lc.T_ramp = effective_T_ramp();
    lc.use_hard_positive = strategy != Strategy::no_hard_positive;
    lc.use_hard_negative = strategy != Strategy::no_hard_negative;
    return lc;
}

void TrainConfig::validate(Index n) const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
    if (n < 2) fail("dataset", "need at least 2 samples");
    if (k < 1) fail("k", "must be at least 1");
    if (k >= n) fail("k", "must be smaller than the sample count " + std::to_string(n));
    if (l < 1) fail("l", "must be at least 1");
    if (P < 1) fail("P", "must be at least 1");
    if (M < k) fail("M", "must be at least k");
    if (batch_size < 1 || batch_size > n) fail("batch_size", "must lie in [1, " + std::to_string(n) + "]");
    if (epochs < 0) fail("epochs", "must be non-negative");
    if (!(effective_tau() > 0.0)) fail("tau", "must be positive");
    if (!(lambda_inv >= 0.0)) fail("lambda_inv", "must be non-negative");
    if (!T_ramp_auto && T_ramp < 0) fail("ramp_T", "must be non-negative");
    if (!(bank_momentum >= 0.0 && bank_momentum < 1.0)) fail("bank_momentum", "must lie in [0, 1)");
    if (!(optimizer.learning_rate > 0.0)) fail("lr", "must be positive");
    if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0)) fail("momentum", "must lie in [0, 1)");
    if (!(optimizer.weight_decay >= 0.0)) fail("weight_decay", "must be non-negative");
    if (embedding_dim < 2) fail("dim", "must be at least 2");
    for (Index h : hidden) {
        if (h == 0) fail("hidden", "widths must be positive");
    }
    if (effective_knn_K() >= n) fail("knn_K", "must be smaller than the sample count");
}

namespace {

struct AnchorResult {
    LossOutput loss;
    bool mined = false;
    bool fallback = false;
    Index positives = 0;
    Index hard = 0;
};

}  // namespace

Trainer::Trainer(Matrix inputs, TrainConfig config) : inputs_(std::move(inputs)), config_(std::move(config)) {
    const Index n = static_cast<Index>(inputs_.rows());
    config_.validate(n);
    if (config_.M > n - 1) {
        log::warning("M=" + std::to_string(config_.M) + " exceeds n-1; clamped to " + std::to_string(n - 1));
    }
    encoder_ = make_encoder(config_.encoder_widths(static_cast<Index>(inputs_.cols())), derive_seed(config_.seed, seed_encoder));
    if (config_.standardize) set_standardization(encoder_, inputs_);
    bank_ = init_bank(n, config_.embedding_dim, derive_seed(config_.seed, seed_bank), config_.bank_momentum);
}

std::optional<EpochReport> Trainer::run_epoch() {
    const long t = completed_ + 1;
    if (t > config_.epochs) return std::nullopt;
    const auto started = std::chrono::steady_clock::now();

    const Index n = bank_.size();
    const Index M = config_.effective_M(n);
    const Index K = config_.effective_knn_K();
    const LossConfig loss_config = config_.loss_config();
    const int omega = ramp(t, loss_config.T_ramp);
    Index k_max = std::max(config_.k, M);
    if (config_.strategy == Strategy::knn_baseline) k_max = std::max(k_max, K);

    // every batch of this epoch sees the bank as it was at the epoch start
    table_ = topk_all(bank_, k_max, t);

    OptimizerConfig step_config = config_.optimizer;
    step_config.learning_rate = scheduled_lr(config_.optimizer, t, config_.epochs);

    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 shuffle_rng(derive_seed(config_.seed, seed_shuffle, static_cast<std::uint64_t>(t)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochReport report;
    report.epoch = t;
    report.ramp = omega;
    report.learning_rate = step_config.learning_rate;
    double sum_total = 0.0, sum_ins = 0.0, sum_inv = 0.0, sum_pos = 0.0, sum_hard = 0.0;
    Index inv_count = 0;

    const Index batch = config_.batch_size;
    std::vector<AnchorResult> results;
    for (Index start = 0; start < n; start += batch) {
        const Index count = std::min(batch, n - start);
        const std::span<const Index> anchors(order.data() + start, count);
        Matrix x(static_cast<Eigen::Index>(count), inputs_.cols());
        for (Index r = 0; r < count; ++r) x.row(static_cast<Eigen::Index>(r)) = inputs_.row(static_cast<Eigen::Index>(anchors[r]));
        ForwardResult fwd = forward(encoder_, x);

        results.assign(count, AnchorResult{});
        parallel_for(count, 8, [&](std::size_t begin, std::size_t end) {
            std::vector<Index> m_prefix;
            for (std::size_t r = begin; r < end; ++r) {
                const Index anchor = anchors[r];
                const auto v = row_span(fwd.features, static_cast<Eigen::Index>(r));
                m_prefix.clear();
                for (const auto& nb : table_.prefix(anchor, M)) m_prefix.push_back(nb.index);

                AnchorResult& res = results[r];
                std::optional<MinedSets> mined;
                if (omega == 1) {
                    res.mined = true;
                    const PositiveSet pos = config_.strategy == Strategy::knn_baseline
                                                ? knn_baseline(table_, anchor, K)
                                                : propagate(table_, anchor, config_.k, config_.l);
                    res.positives = pos.members.size();
                    try {
                        const auto hard = hard_positives(bank_, v, pos, config_.P);
                        res.hard = hard.size();
                        mined = build_background(table_, anchor, pos, hard, M, config_.background_mode);
                    } catch (const MiningError&) {
                        res.fallback = true;
                    }
                }
                res.loss = loss_total(bank_, v, anchor, mined ? &*mined : nullptr, m_prefix, loss_config, t);
            }
        });

        // mean reduction over the batch
        Matrix grad(static_cast<Eigen::Index>(count), fwd.features.cols());
        for (Index r = 0; r < count; ++r) {
            const auto& res = results[r];
            grad.row(static_cast<Eigen::Index>(r)) = res.loss.grad_wrt_feature.transpose() / static_cast<double>(count);
            sum_total += res.loss.loss_total;
            sum_ins += res.loss.loss_ins;
            if (res.loss.has_inv) {
                sum_inv += res.loss.loss_inv;
                ++inv_count;
            }
            if (res.mined) {
                ++report.mined_anchors;
                sum_pos += static_cast<double>(res.positives);
                sum_hard += static_cast<double>(res.hard);
            }
            if (res.fallback) ++report.fallback_anchors;
        }
        const Gradients grads = backward(encoder_, fwd.tape, grad);
        sgd_step(encoder_, grads, step_config);
        for (Index r = 0; r < count; ++r) bank_.update_entry(anchors[r], row_span(fwd.features, static_cast<Eigen::Index>(r)));
    }

    report.loss_total = sum_total / static_cast<double>(n);
    report.loss_ins = sum_ins / static_cast<double>(n);
    report.loss_inv = inv_count ? sum_inv / static_cast<double>(inv_count) : 0.0;
    if (report.mined_anchors) {
        report.mean_positives = sum_pos / static_cast<double>(report.mined_anchors);
        report.mean_hard_positives = sum_hard / static_cast<double>(report.mined_anchors);
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(report.loss_total)) throw NumericError("training diverged at epoch " + std::to_string(t));
    completed_ = t;
    return report;
}

std::vector<EpochReport> Trainer::run() {
    std::vector<EpochReport> reports;
    while (auto r = run_epoch()) reports.push_back(*r);
    return reports;
}

void Trainer::save_checkpoint(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    save_encoder(dir / "encoder.ivpe", encoder_, 2);
    bank_.save(dir / "bank.ivpb", 2);
    nlohmann::ordered_json progress;
    progress["completed_epochs"] = completed_;
    progress["seed"] = config_.seed;
    progress["strategy"] = to_string(config_.strategy);
    progress["samples"] = bank_.size();
    std::ofstream(dir / "progress.json") << progress.dump(2) << '\n';
}

Trainer Trainer::resume(const std::filesystem::path& dir, Matrix inputs, TrainConfig config) {
    Trainer trainer(std::move(inputs), std::move(config));
    nlohmann::json progress;
    try {
        std::ifstream in(dir / "progress.json");
        if (!in) throw CheckpointError("resume: missing " + (dir / "progress.json").string());
        progress = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(std::string("resume: unreadable progress record: ") + e.what());
    }
    EncoderState encoder = load_encoder(dir / "encoder.ivpe");
    if (encoder.widths() != trainer.encoder_.widths()) throw CheckpointError("resume: encoder shape does not match the configuration");
    EmbeddingBank bank = [&] {
        try {
            return EmbeddingBank::load(dir / "bank.ivpb");
        } catch (const FormatError& e) {
            throw CheckpointError(e.what());
        }
    }();
    if (bank.size() != trainer.bank_.size() || bank.dim() != trainer.bank_.dim()) {
        throw CheckpointError("resume: bank shape does not match the dataset and configuration");
    }
    if (progress.value("seed", trainer.config_.seed) != trainer.config_.seed) throw CheckpointError("resume: seed mismatch");
    trainer.encoder_ = std::move(encoder);
    trainer.bank_ = std::move(bank);
    trainer.completed_ = progress.value("completed_epochs", 0L);
    return trainer;
}

TrainResult train(const Matrix& inputs, const TrainConfig& config, const std::function<void(const EpochReport&)>& on_epoch) {
    Trainer trainer(inputs, config);
    TrainResult result;
    while (auto r = trainer.run_epoch()) {
        if (on_epoch) on_epoch(*r);
        result.reports.push_back(*r);
    }
    result.encoder = trainer.encoder();
    result.bank = trainer.bank();
    return result;
}

std::string metrics_record(const EpochReport& r) {
    nlohmann::ordered_json j;
    j["epoch"] = r.epoch;
    j["loss_total"] = r.loss_total;
    j["loss_ins"] = r.loss_ins;
    j["loss_inv"] = r.loss_inv;
    j["mean_positives"] = r.mean_positives;
    j["mean_hard_positives"] = r.mean_hard_positives;
    j["ramp"] = r.ramp;
    j["learning_rate"] = r.learning_rate;
    j["mined_anchors"] = r.mined_anchors;
    j["fallback_anchors"] = r.fallback_anchors;
    return j.dump();
}

}  // namespace invp
