#include <doctest.h>

#include "invp/encoder.hpp"
#include "invp/error.hpp"
#include "invp/objective.hpp"
#include "support.hpp"

using namespace invp;
using namespace invp::testing;

namespace {

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = gauss(rng);
    return m;
}

// Plain loops, no Eigen expressions: the reference forward pass.
std::vector<double> oracle_forward(const EncoderState& s, const std::vector<double>& x) {
    std::vector<double> h(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) h[d] = (x[d] - s.input_shift[static_cast<Eigen::Index>(d)]) / s.input_scale[static_cast<Eigen::Index>(d)];
    for (std::size_t l = 0; l < s.layers.size(); ++l) {
        const auto& layer = s.layers[l];
        std::vector<double> z(layer.fan_out());
        for (Index o = 0; o < layer.fan_out(); ++o) {
            double acc = layer.bias[static_cast<Eigen::Index>(o)];
            for (Index i = 0; i < layer.fan_in(); ++i) acc += h[i] * layer.weight(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(o));
            z[o] = acc;
        }
        if (l + 1 < s.layers.size()) {
            for (double& value : z) value = std::max(0.0, value);
        }
        h = z;
    }
    double norm = 0.0;
    for (double value : h) norm += value * value;
    norm = std::sqrt(norm);
    for (double& value : h) value /= norm;
    return h;
}

// Scalar objective sum(C .* features) for finite differences.
double weighted_sum(const EncoderState& s, const Matrix& x, const Matrix& c) {
    return encode(s, x).cwiseProduct(c).sum();
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("identity layer passes unit inputs through") {
    auto state = make_encoder({4, 4}, 1);
    state.layers[0].weight = Matrix::Identity(4, 4);
    state.layers[0].bias = Vector::Zero(4);
    Matrix x(1, 4);
    x << 0.5, 0.5, 0.5, 0.5;
    const auto out = forward(state, x);
    CHECK((out.features - x).norm() < 1e-15);
}

TEST_CASE("outputs are unit norm") {
    const auto state = make_encoder({10, 16, 16, 6}, 2);
    const Matrix out = encode(state, random_matrix(50, 10, 3));
    for (Eigen::Index r = 0; r < out.rows(); ++r) CHECK(std::abs(out.row(r).norm() - 1.0) < 1e-9);
}

TEST_CASE("zero pre-normalization output stays finite") {
    auto state = make_encoder({3, 2}, 1);
    state.layers[0].weight.setZero();
    state.layers[0].bias.setZero();
    const Matrix out = encode(state, random_matrix(2, 3, 1));
    CHECK(out.allFinite());
}

TEST_CASE("matches the loop oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto state = make_encoder({7, 9, 5, 4}, seed);
        const Matrix x = random_matrix(6, 7, seed + 100);
        set_standardization(state, x);
        const Matrix out = encode(state, x);
        for (Eigen::Index r = 0; r < 6; ++r) {
            const auto row = row_span(x, r);
            const auto expected = oracle_forward(state, std::vector<double>(row.begin(), row.end()));
            for (Eigen::Index d = 0; d < 4; ++d) CHECK(std::abs(out(r, d) - expected[static_cast<std::size_t>(d)]) < 1e-12);
        }
    }
}

TEST_CASE("forward errors") {
    const auto state = make_encoder({3, 2}, 0);
    CHECK_THROWS_AS(forward(state, Matrix::Zero(1, 4)), ShapeError);
    Matrix bad = Matrix::Zero(1, 3);
    bad(0, 1) = INFINITY;
    CHECK_THROWS_AS(forward(state, bad), NumericError);
}

TEST_CASE("zero and radial feature gradients vanish") {
    const auto state = make_encoder({5, 8, 3}, 4);
    const Matrix x = random_matrix(4, 5, 5);
    const auto out = forward(state, x);
    const auto zero = backward(state, out.tape, Matrix::Zero(4, 3));
    for (const auto& g : zero.layers) {
        CHECK(g.weight.norm() == 0.0);
        CHECK(g.bias.norm() == 0.0);
    }
    const auto radial = backward(state, out.tape, 2.5 * out.features);
    for (const auto& g : radial.layers) {
        CHECK(g.weight.norm() < 1e-14);
        CHECK(g.bias.norm() < 1e-14);
    }
}

TEST_CASE("full chain gradient matches finite differences") {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto state = make_encoder({5, 7, 4}, seed);
        const Matrix x = random_matrix(3, 5, seed + 10);
        const Matrix c = random_matrix(3, 4, seed + 20);
        const auto out = forward(state, x);
        const auto grads = backward(state, out.tape, c);
        const double h = 1e-5;
        for (std::size_t l = 0; l < state.layers.size(); ++l) {
            auto check_entry = [&](double& param, double analytic) {
                const double keep = param;
                param = keep + h;
                const double up = weighted_sum(state, x, c);
                param = keep - h;
                const double down = weighted_sum(state, x, c);
                param = keep;
                worst = std::max(worst, relative_error(analytic, (up - down) / (2.0 * h)));
            };
            auto& layer = state.layers[l];
            for (Eigen::Index i = 0; i < layer.weight.size(); ++i) check_entry(layer.weight.data()[i], grads.layers[l].weight.data()[i]);
            for (Eigen::Index i = 0; i < layer.bias.size(); ++i) check_entry(layer.bias[i], grads.layers[l].bias[i]);
        }
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("stale tape is rejected") {
    auto state = make_encoder({3, 4, 2}, 6);
    const auto out = forward(state, random_matrix(2, 3, 6));
    const auto grads = backward(state, out.tape, Matrix::Ones(2, 2));
    sgd_step(state, grads, OptimizerConfig{});
    CHECK_THROWS_AS(backward(state, out.tape, Matrix::Ones(2, 2)), ContractError);
}

TEST_CASE("momentum recurrence") {
    auto state = make_encoder({3, 2}, 7);
    const auto start = state.layers[0];
    Gradients g;
    g.layers.push_back({Matrix::Constant(3, 2, 0.5), Vector::Constant(2, -1.0)});
    OptimizerConfig config;
    config.learning_rate = 0.1;
    config.momentum = 0.9;
    config.weight_decay = 0.0;
    sgd_step(state, g, config);
    sgd_step(state, g, config);
    const Matrix moved = state.layers[0].weight - start.weight;
    CHECK((moved - (-0.1 * 2.9 * g.layers[0].weight)).norm() < 1e-14);
    CHECK((state.layers[0].bias - start.bias - (-0.1 * 2.9 * g.layers[0].bias)).norm() < 1e-14);

    auto plain = make_encoder({3, 2}, 7);
    config.momentum = 0.0;
    sgd_step(plain, g, config);
    CHECK((plain.layers[0].weight - (start.weight - 0.1 * g.layers[0].weight)).norm() < 1e-15);

    auto frozen = make_encoder({3, 2}, 7);
    config.learning_rate = 0.0;
    config.weight_decay = 0.01;
    sgd_step(frozen, g, config);
    CHECK(frozen.layers[0].weight == start.weight);
    CHECK((frozen.momentum[0].weight - (g.layers[0].weight + 0.01 * start.weight)).norm() < 1e-15);
}

TEST_CASE("schedules") {
    OptimizerConfig config;
    config.learning_rate = 0.4;
    config.schedule = Schedule::cosine;
    CHECK(scheduled_lr(config, 1, 10) == doctest::Approx(0.4));
    CHECK(scheduled_lr(config, 6, 10) == doctest::Approx(0.2));
    config.schedule = Schedule::step;
    config.step_every = 3;
    config.step_gamma = 0.5;
    CHECK(scheduled_lr(config, 3, 10) == doctest::Approx(0.4));
    CHECK(scheduled_lr(config, 4, 10) == doctest::Approx(0.2));
    config.schedule = Schedule::constant;
    CHECK(scheduled_lr(config, 9, 10) == 0.4);
}

TEST_CASE("same seed, same encoder") {
    const auto a = make_encoder({6, 8, 4}, 11);
    const auto b = make_encoder({6, 8, 4}, 11);
    for (std::size_t l = 0; l < 2; ++l) CHECK(a.layers[l].weight == b.layers[l].weight);
    const double bound = 1.0 / std::sqrt(6.0);
    CHECK(a.layers[0].weight.cwiseAbs().maxCoeff() <= bound);
}

TEST_CASE("a fixed batch descends") {
    int decreased = 0;
    const int trials = 20;
    for (int trial = 0; trial < trials; ++trial) {
        auto state = make_encoder({8, 16, 6}, static_cast<std::uint64_t>(trial));
        const Matrix x = random_matrix(16, 8, static_cast<std::uint64_t>(trial) + 50);
        const auto bank = init_bank(16, 6, static_cast<std::uint64_t>(trial) + 90);
        const auto table = topk_all(bank, 5);
        OptimizerConfig config;
        config.learning_rate = 0.01;
        config.weight_decay = 0.0;
        LossConfig loss;
        loss.tau = 0.2;
        auto batch_loss = [&](const Matrix& features, Matrix* grad) {
            double total = 0.0;
            for (Index i = 0; i < 16; ++i) {
                std::vector<Index> prefix;
                for (const auto& nb : table.prefix(i, 5)) prefix.push_back(nb.index);
                const auto out = loss_total(bank, row_span(features, static_cast<Eigen::Index>(i)), i, nullptr, prefix, loss, 1);
                total += out.loss_total / 16.0;
                if (grad) grad->row(static_cast<Eigen::Index>(i)) = out.grad_wrt_feature.transpose() / 16.0;
            }
            return total;
        };
        const double first = batch_loss(encode(state, x), nullptr);
        for (int step = 0; step < 50; ++step) {
            const auto out = forward(state, x);
            Matrix grad(16, 6);
            batch_loss(out.features, &grad);
            sgd_step(state, backward(state, out.tape, grad), config);
        }
        decreased += batch_loss(encode(state, x), nullptr) < first;
    }
    CHECK(decreased >= 19);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = scratch_dir("encoder");
    auto state = make_encoder({5, 6, 3}, 12);
    set_standardization(state, random_matrix(20, 5, 1));
    const auto out = forward(state, random_matrix(4, 5, 2));
    sgd_step(state, backward(state, out.tape, random_matrix(4, 3, 3)), OptimizerConfig{});

    save_encoder(dir / "v2.ivpe", state, 2);
    const auto exact = load_encoder(dir / "v2.ivpe");
    CHECK(exact.widths() == state.widths());
    for (std::size_t l = 0; l < 2; ++l) {
        CHECK(exact.layers[l].weight == state.layers[l].weight);
        CHECK(exact.momentum[l].bias == state.momentum[l].bias);
    }
    CHECK(exact.input_scale == state.input_scale);

    save_encoder(dir / "v1.ivpe", state, 1);
    const auto approx = load_encoder(dir / "v1.ivpe");
    CHECK((approx.layers[1].weight - state.layers[1].weight).cwiseAbs().maxCoeff() < 1e-6);

    const std::string bytes = slurp(dir / "v1.ivpe");
    CHECK(bytes.substr(0, 4) == "IVPE");
    std::ofstream(dir / "bad.ivpe", std::ios::binary) << "IVPX" << bytes.substr(4);
    CHECK_THROWS_AS(load_encoder(dir / "bad.ivpe"), CheckpointError);
    std::ofstream(dir / "short.ivpe", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
    CHECK_THROWS_AS(load_encoder(dir / "short.ivpe"), CheckpointError);
    std::filesystem::remove_all(dir);
}

}
