#include "invp/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "invp/error.hpp"

namespace invp {

namespace {

// log sum_j exp(bank_j . v / tau) over the given rows, with its gradient in v.
struct LogSumExp {
    double value = 0.0;
    Vector grad;
};

// Every logit goes through here so that equal inputs give equal bits.
double row_dot(const EmbeddingBank& bank, Index j, std::span<const double> v) {
    const auto dim = static_cast<Eigen::Index>(v.size());
    return bank.vectors().row(static_cast<Eigen::Index>(j)).dot(Eigen::Map<const Vector>(v.data(), dim));
}

template <class IndexAt>
LogSumExp log_sum_exp(const EmbeddingBank& bank, std::span<const double> v, std::size_t count, IndexAt index_at,
                      double tau, bool want_grad) {
    const auto dim = static_cast<Eigen::Index>(v.size());
    const Matrix& rows = bank.vectors();
    for (std::size_t r = 0; r < count; ++r) {
        if (index_at(r) >= bank.size()) throw BoundsError("objective: row index " + std::to_string(index_at(r)) + " outside the bank");
    }
    std::vector<double> logits(count);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < count; ++r) {
        logits[r] = row_dot(bank, index_at(r), v) / tau;
        peak = std::max(peak, logits[r]);
    }
    double total = 0.0;
    for (double& s : logits) {
        s = std::exp(s - peak);
        total += s;
    }
    LogSumExp out;
    out.value = peak + std::log(total);
    if (want_grad) {
        out.grad = Vector::Zero(dim);
        for (std::size_t r = 0; r < count; ++r) {
            out.grad.noalias() += (logits[r] / total) * rows.row(static_cast<Eigen::Index>(index_at(r))).transpose();
        }
        out.grad /= tau;
    }
    return out;
}

LogSumExp lse_over(const EmbeddingBank& bank, std::span<const double> v, std::span<const Index> rows, double tau,
                   bool want_grad = true) {
    return log_sum_exp(bank, v, rows.size(), [&](std::size_t r) { return rows[r]; }, tau, want_grad);
}

LogSumExp lse_over_all(const EmbeddingBank& bank, std::span<const double> v, double tau) {
    return log_sum_exp(bank, v, bank.size(), [](std::size_t r) { return r; }, tau, true);
}

void check_query(const EmbeddingBank& bank, std::span<const double> v, double tau) {
    if (v.size() != bank.dim()) throw ShapeError("objective: feature dimension does not match the bank");
    if (!(tau > 0.0)) throw ConfigError("objective: tau must be positive");
}

bool contains(std::span<const Index> set, Index j) {
    if (std::is_sorted(set.begin(), set.end())) return std::binary_search(set.begin(), set.end(), j);
    return std::find(set.begin(), set.end(), j) != set.end();
}

bool is_subset(std::span<const Index> sub, std::span<const Index> super) {
    if (sub.empty()) return true;
    if (std::is_sorted(super.begin(), super.end())) {
        return std::all_of(sub.begin(), sub.end(), [&](Index j) { return std::binary_search(super.begin(), super.end(), j); });
    }
    std::vector<Index> sorted(super.begin(), super.end());
    std::sort(sorted.begin(), sorted.end());
    return std::all_of(sub.begin(), sub.end(), [&](Index j) { return std::binary_search(sorted.begin(), sorted.end(), j); });
}

std::vector<Index> sorted_union(std::span<const Index> a, std::span<const Index> b) {
    std::vector<Index> sa(a.begin(), a.end());
    std::vector<Index> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    std::vector<Index> out;
    out.reserve(sa.size() + sb.size());
    std::set_union(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(out));
    return out;
}

}  // namespace

double prob_point(const EmbeddingBank& bank, std::span<const double> v, Index j, std::span<const Index> support,
                  double tau) {
    check_query(bank, v, tau);
    if (support.empty()) throw ContractError("prob_point: empty support");
    if (!contains(support, j)) throw ContractError("prob_point: index " + std::to_string(j) + " is not in the support");
    const auto lse = lse_over(bank, v, support, tau, false);
    return std::exp(row_dot(bank, j, v) / tau - lse.value);
}

double prob_set(const EmbeddingBank& bank, std::span<const double> v, std::span<const Index> members,
                std::span<const Index> support, double tau) {
    check_query(bank, v, tau);
    if (!is_subset(members, support)) throw ContractError("prob_set: set is not contained in the support");
    if (members.empty()) return 0.0;
    const auto num = lse_over(bank, v, members, tau, false);
    const auto den = lse_over(bank, v, support, tau, false);
    return std::exp(num.value - den.value);
}

LossGrad set_ratio_loss(const EmbeddingBank& bank, std::span<const double> v, std::span<const Index> numerator,
                        std::span<const Index> background, double tau) {
    check_query(bank, v, tau);
    if (numerator.empty()) throw ContractError("loss_inv: empty hard positive set");
    if (!is_subset(numerator, background)) throw ContractError("loss_inv: hard positives must lie inside the background");
    const auto num = lse_over(bank, v, numerator, tau);
    const auto den = lse_over(bank, v, background, tau);
    return {den.value - num.value, den.grad - num.grad};
}

LossGrad loss_inv(const EmbeddingBank& bank, std::span<const double> v, const MinedSets& mined, double tau) {
    return set_ratio_loss(bank, v, mined.hard_positives, mined.background, tau);
}

LossGrad loss_ins(const EmbeddingBank& bank, std::span<const double> v, Index anchor, std::span<const Index> m_prefix,
                  double tau) {
    check_query(bank, v, tau);
    if (anchor >= bank.size()) throw BoundsError("loss_ins: anchor out of range");
    if (contains(m_prefix, anchor)) throw ContractError("loss_ins: anchor must not be in its own neighbor prefix");
    std::vector<Index> support(m_prefix.begin(), m_prefix.end());
    support.push_back(anchor);
    auto lse = lse_over(bank, v, support, tau);
    const auto own = bank.row(anchor);
    LossGrad out;
    out.loss = lse.value - row_dot(bank, anchor, v) / tau;
    out.grad = std::move(lse.grad);
    for (std::size_t d = 0; d < v.size(); ++d) out.grad[static_cast<Eigen::Index>(d)] -= own[d] / tau;
    return out;
}

int ramp(long t, long T) { return t <= T ? 0 : 1; }

LossOutput loss_total(const EmbeddingBank& bank, std::span<const double> v, Index anchor, const MinedSets* mined,
                      std::span<const Index> m_prefix, const LossConfig& config, long t) {
    check_query(bank, v, config.tau);
    const double tau = config.tau;
    LossOutput out;

    LossGrad ins;
    LogSumExp full;  // shared by both terms when the support is the whole bank
    if (config.use_hard_negative) {
        ins = loss_ins(bank, v, anchor, m_prefix, tau);
    } else {
        // full-bank support, the anchor's own row included
        if (anchor >= bank.size()) throw BoundsError("loss_total: anchor out of range");
        full = lse_over_all(bank, v, tau);
        const auto own = bank.row(anchor);
        ins.loss = full.value - row_dot(bank, anchor, v) / tau;
        ins.grad = full.grad;
        for (std::size_t d = 0; d < v.size(); ++d) ins.grad[static_cast<Eigen::Index>(d)] -= own[d] / tau;
    }
    out.loss_ins = ins.loss;
    out.loss_total = ins.loss;
    out.grad_wrt_feature = std::move(ins.grad);

    if (mined == nullptr) return out;

    const std::span<const Index> numerator =
        config.use_hard_positive ? std::span<const Index>(mined->hard_positives) : std::span<const Index>(mined->positives);
    LossGrad inv;
    if (!config.use_hard_negative) {
        if (numerator.empty()) throw ContractError("loss_inv: empty positive set");
        const auto num = lse_over(bank, v, numerator, tau);
        inv = {full.value - num.value, full.grad - num.grad};
    } else if (config.use_hard_positive) {
        inv = loss_inv(bank, v, *mined, tau);
    } else {
        // every positive must sit in the denominator
        const auto background = sorted_union(mined->background, numerator);
        inv = set_ratio_loss(bank, v, numerator, background, tau);
    }
    out.has_inv = true;
    out.loss_inv = inv.loss;
    const double weight = config.lambda_inv * ramp(t, config.T_ramp);
    if (weight != 0.0) {
        out.loss_total = out.loss_ins + weight * inv.loss;
        out.grad_wrt_feature += weight * inv.grad;
    }
    return out;
}

}  // namespace invp
