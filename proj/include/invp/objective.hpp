#pragma once

#include <optional>
#include <span>

#include "invp/bank.hpp"
#include "invp/mining.hpp"

namespace invp {

struct LossConfig {
    double tau = 0.07;
    double lambda_inv = 0.6;
    long T_ramp = 30;
    bool use_hard_positive = true;
    bool use_hard_negative = true;
};

// A loss value and its gradient with respect to the query feature. Bank rows
// are treated as constants.
struct LossGrad {
    double loss = 0.0;
    Vector grad;
};

struct LossOutput {
    double loss_total = 0.0;
    double loss_ins = 0.0;
    double loss_inv = 0.0;
    bool has_inv = false;
    Vector grad_wrt_feature;
};

// Softmax probability that v is recognized as bank row j, restricted to the
// rows in support. Support entries are assumed distinct.
double prob_point(const EmbeddingBank& bank, std::span<const double> v, Index j,
                  std::span<const Index> support, double tau);

// Total probability mass of the rows in members (a subset of support).
double prob_set(const EmbeddingBank& bank, std::span<const double> v, std::span<const Index> members,
                std::span<const Index> support, double tau);

// -log( sum_{p in numerator} exp(s_p) / sum_{n in background} exp(s_n) ), s = bank.v / tau.
// numerator must be non-empty and contained in background.
LossGrad set_ratio_loss(const EmbeddingBank& bank, std::span<const double> v, std::span<const Index> numerator,
                        std::span<const Index> background, double tau);

LossGrad loss_inv(const EmbeddingBank& bank, std::span<const double> v, const MinedSets& mined, double tau);

// Instance discrimination against the anchor's nearest bank rows.
LossGrad loss_ins(const EmbeddingBank& bank, std::span<const double> v, Index anchor,
                  std::span<const Index> m_prefix, double tau);

// Binary ramp: 0 for the first T epochs (t <= T), 1 afterwards. Epochs are 1-based.
int ramp(long t, long T);

// loss_ins + lambda_inv * ramp(t) * loss_inv, honoring the ablation flags:
// without hard positives the numerator is the full positive set, and without
// hard negatives every bank row is in both supports. When mined is absent
// only the instance term is evaluated.
LossOutput loss_total(const EmbeddingBank& bank, std::span<const double> v, Index anchor,
                      const MinedSets* mined, std::span<const Index> m_prefix, const LossConfig& config, long t);

}  // namespace invp
