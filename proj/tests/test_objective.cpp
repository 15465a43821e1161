#include <doctest.h>

#include "invp/error.hpp"
#include "invp/objective.hpp"
#include "support.hpp"

using namespace invp;
using namespace invp::testing;

namespace {

Matrix axes(Index count, Index dim) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(dim));
    for (Index i = 0; i < count; ++i) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = 1.0;
    return m;
}

std::vector<Index> range(Index n) {
    std::vector<Index> out(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
}

// Central differences of f at v, step 1e-5.
Vector numeric_gradient(const std::function<double(const std::vector<double>&)>& f, std::vector<double> v) {
    Vector g(static_cast<Eigen::Index>(v.size()));
    const double h = 1e-5;
    for (std::size_t d = 0; d < v.size(); ++d) {
        const double keep = v[d];
        v[d] = keep + h;
        const double up = f(v);
        v[d] = keep - h;
        const double down = f(v);
        v[d] = keep;
        g[static_cast<Eigen::Index>(d)] = (up - down) / (2.0 * h);
    }
    return g;
}

double max_relative_error(const Vector& analytic, const Vector& numeric) {
    double worst = 0.0;
    for (Eigen::Index d = 0; d < analytic.size(); ++d) worst = std::max(worst, relative_error(analytic[d], numeric[d]));
    return worst;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("singleton support has probability one") {
    const auto bank = init_bank(5, 4, 1);
    std::mt19937_64 rng(1);
    const auto v = random_unit(4, rng);
    const std::vector<Index> one{3};
    CHECK(prob_point(bank, v, 3, one, 0.07) == 1.0);
}

TEST_CASE("equal similarities share mass evenly") {
    const auto bank = EmbeddingBank::from_rows(axes(4, 5));
    const std::vector<double> v{0.0, 0.0, 0.0, 0.0, 1.0};
    for (Index j = 0; j < 4; ++j) CHECK(prob_point(bank, v, j, range(4), 0.5) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("two-axis softmax") {
    const auto bank = EmbeddingBank::from_rows(axes(2, 2));
    const std::vector<double> e1{1.0, 0.0};
    const High e = exp(High(1));
    const double expected = static_cast<double>(e / (e + 1));
    CHECK(std::abs(prob_point(bank, e1, 0, range(2), 1.0) - expected) < 1e-15);
    CHECK(expected == doctest::Approx(0.731059).epsilon(1e-6));
}

TEST_CASE("prob_set completeness, emptiness and additivity") {
    const auto bank = init_bank(12, 6, 2);
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const auto v = random_unit(6, rng);
        const double tau = 0.05 + 0.1 * (trial % 5);
        const auto support = range(12);
        CHECK(std::abs(prob_set(bank, v, support, support, tau) - 1.0) < 1e-12);
        CHECK(prob_set(bank, v, {}, support, tau) == 0.0);
        const std::vector<Index> subset{1, 4, 5, 9};
        double sum = 0.0;
        for (Index j : subset) sum += prob_point(bank, v, j, support, tau);
        CHECK(std::abs(prob_set(bank, v, subset, support, tau) - sum) < 1e-12);
        double total = 0.0;
        for (Index j : support) total += prob_point(bank, v, j, support, tau);
        CHECK(std::abs(total - 1.0) < 1e-12);
    }
}

TEST_CASE("support contract") {
    const auto bank = init_bank(4, 3, 0);
    const std::vector<double> v{1.0, 0.0, 0.0};
    const std::vector<Index> support{0, 1};
    const std::vector<Index> outside{2};
    CHECK_THROWS_AS(prob_point(bank, v, 2, support, 0.1), ContractError);
    CHECK_THROWS_AS(prob_set(bank, v, outside, support, 0.1), ContractError);
    CHECK_THROWS_AS(prob_point(bank, v, 0, support, 0.0), ConfigError);
}

TEST_CASE("large logits stay finite") {
    const auto bank = init_bank(50, 8, 3);
    std::mt19937_64 rng(3);
    const auto v = random_unit(8, rng);
    const double p = prob_point(bank, v, 0, range(50), 1e-3);
    CHECK(std::isfinite(p));
    CHECK(p >= 0.0);
}

TEST_CASE("shift invariance") {
    // a common offset in every logit is a common rotation-free shift: scale v and compare against a
    // direct softmax evaluated with an explicit offset
    const auto bank = init_bank(10, 5, 4);
    std::mt19937_64 rng(4);
    const auto v = random_unit(5, rng);
    const double tau = 0.1;
    std::vector<double> logits;
    for (Index j = 0; j < 10; ++j) logits.push_back(similarity(bank.row(j), v) / tau);
    for (double shift : {-500.0, 0.0, 300.0}) {
        double peak = -INFINITY;
        for (double s : logits) peak = std::max(peak, s + shift);
        double total = 0.0;
        for (double s : logits) total += std::exp(s + shift - peak);
        for (Index j = 0; j < 10; ++j) {
            const double shifted = std::exp(logits[j] + shift - peak) / total;
            CHECK(std::abs(shifted - prob_point(bank, v, j, range(10), tau)) < 1e-12);
        }
    }
}

TEST_CASE("entropy grows with temperature") {
    const auto bank = init_bank(20, 6, 5);
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto v = random_unit(6, rng);
        double previous = -1.0;
        for (double tau : {0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0}) {
            double entropy = 0.0;
            for (Index j = 0; j < 20; ++j) {
                const double p = prob_point(bank, v, j, range(20), tau);
                if (p > 0.0) entropy -= p * std::log(p);
            }
            CHECK(entropy >= previous - 1e-12);
            previous = entropy;
        }
    }
}

TEST_CASE("loss_inv closed forms") {
    const auto bank = EmbeddingBank::from_rows(axes(2, 2));
    const std::vector<double> e1{1.0, 0.0};
    MinedSets mined;
    mined.hard_positives = {1};
    mined.background = {0, 1};
    const auto out = loss_inv(bank, e1, mined, 1.0);
    const double expected = static_cast<double>(log(1 + exp(High(1))));
    CHECK(std::abs(out.loss - expected) < 1e-15);
    CHECK(expected == doctest::Approx(1.313262).epsilon(1e-6));

    mined.background = {1};
    const auto zero = loss_inv(bank, e1, mined, 1.0);
    CHECK(zero.loss == 0.0);
    CHECK(zero.grad.norm() == 0.0);

    mined.hard_positives = {};
    CHECK_THROWS_AS(loss_inv(bank, e1, mined, 1.0), ContractError);
}

TEST_CASE("loss_ins closed forms") {
    const auto bank = EmbeddingBank::from_rows(axes(5, 5));
    const std::vector<double> v{1.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(loss_ins(bank, v, 0, {}, 0.07).loss == 0.0);
    for (Index m = 1; m <= 4; ++m) {
        std::vector<Index> prefix;
        for (Index j = 1; j <= m; ++j) prefix.push_back(j);
        const High e = exp(High(1));
        const double expected = static_cast<double>(-log(e / (e + High(static_cast<int>(m)))));
        CHECK(std::abs(loss_ins(bank, v, 0, prefix, 1.0).loss - expected) < 1e-15);
    }
    const std::vector<Index> one{1};
    CHECK(loss_ins(bank, v, 0, one, 1.0).loss == doctest::Approx(0.313262).epsilon(1e-6));
    const std::vector<Index> with_anchor{0, 1};
    CHECK_THROWS_AS(loss_ins(bank, v, 0, with_anchor, 1.0), ContractError);
}

TEST_CASE("loss_inv is non-negative when the numerator is inside the background") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        const auto bank = init_bank(30, 6, static_cast<std::uint64_t>(trial));
        const auto v = random_unit(6, rng);
        MinedSets mined;
        for (Index j = 0; j < 30; ++j) {
            if (rng() % 2) mined.background.push_back(j);
        }
        if (mined.background.empty()) mined.background.push_back(0);
        mined.hard_positives.push_back(mined.background.front());
        if (mined.background.size() > 2) mined.hard_positives.push_back(mined.background[2]);
        CHECK(loss_inv(bank, v, mined, 0.1).loss >= 0.0);
    }
}

TEST_CASE("gradients match finite differences") {
    std::mt19937_64 rng(7);
    double worst = 0.0;
    for (int trial = 0; trial < 120; ++trial) {
        const Index n = 40 + rng() % 60;
        const Index dim = 4 + rng() % 12;
        const auto bank = init_bank(n, dim, static_cast<std::uint64_t>(trial));
        const auto v = random_unit(dim, rng);
        const double tau = 0.1 + 0.4 * static_cast<double>(rng() % 100) / 100.0;
        const Index anchor = rng() % n;
        const auto table = topk_all(bank, 20);
        std::vector<Index> prefix;
        for (const auto& nb : table.prefix(anchor, 12)) prefix.push_back(nb.index);

        const auto ins = loss_ins(bank, v, anchor, prefix, tau);
        const auto f_ins = [&](const std::vector<double>& x) { return loss_ins(bank, x, anchor, prefix, tau).loss; };
        worst = std::max(worst, max_relative_error(ins.grad, numeric_gradient(f_ins, v)));

        const auto pos = propagate(table, anchor, 3, 2);
        const auto hard = hard_positives(bank, v, pos, 4);
        const auto mined = build_background(table, anchor, pos, hard, 12,
                                            trial % 2 ? BackgroundMode::exact_background : BackgroundMode::approximate_background);
        const auto inv = loss_inv(bank, v, mined, tau);
        const auto f_inv = [&](const std::vector<double>& x) { return loss_inv(bank, x, mined, tau).loss; };
        worst = std::max(worst, max_relative_error(inv.grad, numeric_gradient(f_inv, v)));

        LossConfig config;
        config.tau = tau;
        config.T_ramp = 2;
        config.use_hard_positive = trial % 3 != 1;
        config.use_hard_negative = trial % 3 != 2;
        const auto total = loss_total(bank, v, anchor, &mined, prefix, config, 3);
        const auto f_total = [&](const std::vector<double>& x) {
            return loss_total(bank, x, anchor, &mined, prefix, config, 3).loss_total;
        };
        worst = std::max(worst, max_relative_error(total.grad_wrt_feature, numeric_gradient(f_total, v)));
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("ramp") {
    CHECK(ramp(30, 30) == 0);
    CHECK(ramp(31, 30) == 1);
    CHECK(ramp(1, 30) == 0);
    for (long t = 1; t < 10; ++t) CHECK(ramp(t, 0) == 1);
}

TEST_CASE("loss_total composition") {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 50; ++trial) {
        const auto bank = init_bank(60, 8, static_cast<std::uint64_t>(trial));
        const auto v = random_unit(8, rng);
        const Index anchor = rng() % 60;
        const auto table = topk_all(bank, 16);
        std::vector<Index> prefix;
        for (const auto& nb : table.prefix(anchor, 16)) prefix.push_back(nb.index);
        const auto pos = propagate(table, anchor, 4, 3);
        const auto mined = build_background(table, anchor, pos, hard_positives(bank, v, pos, 5), 16,
                                            BackgroundMode::approximate_background);
        LossConfig config;
        config.T_ramp = 30;
        const auto ins = loss_ins(bank, v, anchor, prefix, config.tau);
        const auto inv = loss_inv(bank, v, mined, config.tau);

        const auto early = loss_total(bank, v, anchor, &mined, prefix, config, 30);
        CHECK(std::abs(early.loss_total - early.loss_ins) <= 1e-15);
        CHECK(early.loss_ins == ins.loss);
        CHECK((early.grad_wrt_feature - ins.grad).norm() == 0.0);
        CHECK(early.loss_inv == inv.loss);

        const auto late = loss_total(bank, v, anchor, &mined, prefix, config, 31);
        CHECK(std::abs(late.loss_total - (ins.loss + 0.6 * inv.loss)) < 1e-12);
        CHECK((late.grad_wrt_feature - (ins.grad + 0.6 * inv.grad)).norm() < 1e-12);

        LossConfig off = config;
        off.lambda_inv = 0.0;
        CHECK(loss_total(bank, v, anchor, &mined, prefix, off, 100).loss_total == ins.loss);

        const auto alone = loss_total(bank, v, anchor, nullptr, prefix, config, 31);
        CHECK_FALSE(alone.has_inv);
        CHECK(alone.loss_total == ins.loss);
    }
}

TEST_CASE("ablation flags reroute the sets") {
    const auto bank = init_bank(40, 6, 9);
    std::mt19937_64 rng(9);
    const auto v = random_unit(6, rng);
    const auto table = topk_all(bank, 10);
    std::vector<Index> prefix;
    for (const auto& nb : table.prefix(0, 10)) prefix.push_back(nb.index);
    const auto pos = propagate(table, 0, 4, 3);
    const auto mined = build_background(table, 0, pos, hard_positives(bank, v, pos, 2), 10, BackgroundMode::approximate_background);
    LossConfig config;
    config.T_ramp = 0;

    config.use_hard_positive = false;
    std::vector<Index> bg;
    std::set_union(mined.background.begin(), mined.background.end(), pos.members.begin(), pos.members.end(),
                   std::back_inserter(bg));
    CHECK(loss_total(bank, v, 0, &mined, prefix, config, 1).loss_inv ==
          doctest::Approx(set_ratio_loss(bank, v, pos.members, bg, config.tau).loss).epsilon(1e-14));

    config.use_hard_positive = true;
    config.use_hard_negative = false;
    const auto all = range(40);
    const auto out = loss_total(bank, v, 0, &mined, prefix, config, 1);
    CHECK(out.loss_inv == doctest::Approx(set_ratio_loss(bank, v, mined.hard_positives, all, config.tau).loss).epsilon(1e-14));
    CHECK(out.loss_ins == doctest::Approx(-std::log(prob_point(bank, v, 0, all, config.tau))).epsilon(1e-12));
}

}
