#include "invp/encoder.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "binary_io.hpp"
#include "invp/error.hpp"

namespace invp {

namespace {

constexpr char kMagic[4] = {'I', 'V', 'P', 'E'};
constexpr double kNormFloor = 1e-12;

void check_same_shape(const Affine& a, const Affine& b, const char* what) {
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() || a.bias.size() != b.bias.size()) {
        throw ShapeError(std::string(what) + ": parameter shapes do not match the encoder");
    }
}

}  // namespace

std::vector<Index> EncoderState::widths() const {
    std::vector<Index> w;
    if (layers.empty()) return w;
    w.push_back(layers.front().fan_in());
    for (const auto& layer : layers) w.push_back(layer.fan_out());
    return w;
}

EncoderState make_encoder(const std::vector<Index>& widths, std::uint64_t seed) {
    if (widths.size() < 2) throw ConfigError("encoder: need at least an input and an output width");
    for (Index w : widths) {
        if (w == 0) throw ConfigError("encoder: layer widths must be positive");
    }
    EncoderState state;
    state.seed = seed;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const auto fan_in = static_cast<Eigen::Index>(widths[l]);
        const auto fan_out = static_cast<Eigen::Index>(widths[l + 1]);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> uniform(-bound, bound);
        Affine layer{Matrix(fan_in, fan_out), Vector(fan_out)};
        for (Eigen::Index k = 0; k < layer.weight.size(); ++k) layer.weight.data()[k] = uniform(rng);
        for (Eigen::Index k = 0; k < layer.bias.size(); ++k) layer.bias[k] = uniform(rng);
        state.momentum.push_back({Matrix::Zero(fan_in, fan_out), Vector::Zero(fan_out)});
        state.layers.push_back(std::move(layer));
    }
    state.input_shift = Vector::Zero(static_cast<Eigen::Index>(widths.front()));
    state.input_scale = Vector::Ones(static_cast<Eigen::Index>(widths.front()));
    return state;
}

void set_standardization(EncoderState& state, const Matrix& inputs) {
    if (static_cast<Index>(inputs.cols()) != state.input_dim()) throw ShapeError("encoder: standardization input width mismatch");
    if (inputs.rows() == 0) throw ShapeError("encoder: cannot standardize an empty input set");
    const auto n = static_cast<double>(inputs.rows());
    state.input_shift = inputs.colwise().sum().transpose() / n;
    state.input_scale.resize(inputs.cols());
    for (Eigen::Index c = 0; c < inputs.cols(); ++c) {
        const double var = (inputs.col(c).array() - state.input_shift[c]).square().sum() / n;
        state.input_scale[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    ++state.version;
}

ForwardResult forward(const EncoderState& state, const Matrix& inputs) {
    if (state.layers.empty()) throw ConfigError("encoder: no layers");
    if (static_cast<Index>(inputs.cols()) != state.input_dim()) {
        throw ShapeError("encoder: input width " + std::to_string(inputs.cols()) + " does not match fan_in " +
                         std::to_string(state.input_dim()));
    }
    if (!inputs.allFinite()) throw NumericError("encoder: non-finite input");

    ForwardResult out;
    Tape& tape = out.tape;
    tape.version = state.version;
    Matrix h = (inputs.rowwise() - state.input_shift.transpose()).array().rowwise() / state.input_scale.transpose().array();
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        const auto& layer = state.layers[l];
        Matrix z = h * layer.weight;
        z.rowwise() += layer.bias.transpose();
        tape.layer_inputs.push_back(std::move(h));
        if (l + 1 < state.layers.size()) h = z.cwiseMax(0.0);
        tape.pre_activations.push_back(std::move(z));
    }
    const Matrix& u = tape.pre_activations.back();
    tape.norms.resize(u.rows());
    tape.features.resize(u.rows(), u.cols());
    for (Eigen::Index r = 0; r < u.rows(); ++r) {
        double nrm = u.row(r).norm();
        if (nrm < kNormFloor) nrm += kNormFloor;
        tape.norms[r] = nrm;
        tape.features.row(r) = u.row(r) / nrm;
    }
    out.features = tape.features;
    return out;
}

Matrix encode(const EncoderState& state, const Matrix& inputs) { return forward(state, inputs).features; }

Gradients backward(const EncoderState& state, const Tape& tape, const Matrix& grad_features) {
    if (tape.version != state.version || tape.pre_activations.size() != state.layers.size()) {
        throw ContractError("encoder: tape does not belong to the current parameters (stale tape)");
    }
    const Matrix& v = tape.features;
    if (grad_features.rows() != v.rows() || grad_features.cols() != v.cols()) {
        throw ShapeError("encoder: feature gradient shape mismatch");
    }
    // tangent projection of the normalization: (g - v (v.g)) / |u|
    Matrix dz(v.rows(), v.cols());
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double radial = v.row(r).dot(grad_features.row(r));
        dz.row(r) = (grad_features.row(r) - radial * v.row(r)) / tape.norms[r];
    }
    Gradients grads;
    grads.layers.resize(state.layers.size());
    for (std::size_t l = state.layers.size(); l-- > 0;) {
        grads.layers[l].weight = tape.layer_inputs[l].transpose() * dz;
        grads.layers[l].bias = dz.colwise().sum().transpose();
        if (l > 0) {
            Matrix dh = dz * state.layers[l].weight.transpose();
            dz = (tape.pre_activations[l - 1].array() > 0.0).select(dh, 0.0);
        }
    }
    return grads;
}

double scheduled_lr(const OptimizerConfig& config, long t, long total) {
    switch (config.schedule) {
        case Schedule::constant:
            return config.learning_rate;
        case Schedule::step: {
            const long every = std::max(1L, config.step_every);
            return config.learning_rate * std::pow(config.step_gamma, static_cast<double>((t - 1) / every));
        }
        case Schedule::cosine: {
            if (total <= 0) return config.learning_rate;
            const double progress = static_cast<double>(t - 1) / static_cast<double>(total);
            return 0.5 * config.learning_rate * (1.0 + std::cos(std::numbers::pi * progress));
        }
    }
    return config.learning_rate;
}

void sgd_step(EncoderState& state, const Gradients& grads, const OptimizerConfig& config) {
    if (grads.layers.size() != state.layers.size()) throw ShapeError("sgd_step: layer count mismatch");
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        check_same_shape(state.layers[l], grads.layers[l], "sgd_step");
        check_same_shape(state.layers[l], state.momentum[l], "sgd_step");
    }
    const double lr = config.learning_rate;
    const double mu = config.momentum;
    const double wd = config.weight_decay;
    for (std::size_t l = 0; l < state.layers.size(); ++l) {
        auto& p = state.layers[l];
        auto& buf = state.momentum[l];
        const auto& g = grads.layers[l];
        buf.weight = mu * buf.weight + g.weight + wd * p.weight;
        buf.bias = mu * buf.bias + g.bias + wd * p.bias;
        p.weight -= lr * buf.weight;
        p.bias -= lr * buf.bias;
    }
    ++state.version;
}

namespace {

template <class Writer>
void put_scalars(Writer& w, const double* data, Eigen::Index count, std::uint32_t version) {
    for (Eigen::Index k = 0; k < count; ++k) {
        if (version == 1) {
            w.template put<float>(static_cast<float>(data[k]));
        } else {
            w.template put<double>(data[k]);
        }
    }
}

void get_scalars(detail::BinaryReader& r, double* data, Eigen::Index count, std::uint32_t version) {
    r.require(static_cast<std::size_t>(count) * (version == 1 ? sizeof(float) : sizeof(double)));
    for (Eigen::Index k = 0; k < count; ++k) data[k] = version == 1 ? static_cast<double>(r.get<float>()) : r.get<double>();
}

}  // namespace

void save_encoder(const std::filesystem::path& path, const EncoderState& state, std::uint32_t version) {
    if (version != 1 && version != 2) throw ConfigError("encoder: unknown format version " + std::to_string(version));
    detail::BinaryWriter w(path);
    w.bytes(kMagic, 4);
    w.put<std::uint32_t>(version);
    const auto widths = state.widths();
    w.put<std::uint32_t>(static_cast<std::uint32_t>(state.layers.size()));
    for (Index width : widths) w.put<std::uint32_t>(static_cast<std::uint32_t>(width));
    w.put<std::uint64_t>(state.seed);
    for (const auto& layer : state.layers) {
        put_scalars(w, layer.weight.data(), layer.weight.size(), version);
        put_scalars(w, layer.bias.data(), layer.bias.size(), version);
    }
    put_scalars(w, state.input_shift.data(), state.input_shift.size(), version);
    put_scalars(w, state.input_scale.data(), state.input_scale.size(), version);
    for (const auto& buf : state.momentum) {
        put_scalars(w, buf.weight.data(), buf.weight.size(), version);
        put_scalars(w, buf.bias.data(), buf.bias.size(), version);
    }
    w.finish();
}

EncoderState load_encoder(const std::filesystem::path& path) {
    detail::BinaryReader r(path, "encoder");
    char magic[4];
    r.bytes(magic, 4);
    if (std::string(magic, 4) != std::string(kMagic, 4)) throw CheckpointError("encoder: bad magic at byte offset 0");
    const auto version = r.get<std::uint32_t>();
    if (version != 1 && version != 2) throw CheckpointError("encoder: unsupported version " + std::to_string(version));
    const auto layer_count = r.get<std::uint32_t>();
    if (layer_count == 0 || layer_count > 64) throw CheckpointError("encoder: implausible layer count");
    std::vector<Index> widths;
    for (std::uint32_t l = 0; l <= layer_count; ++l) {
        const auto width = r.get<std::uint32_t>();
        if (width == 0) throw CheckpointError("encoder: zero layer width");
        widths.push_back(width);
    }
    EncoderState state = make_encoder(widths, 0);
    state.seed = r.get<std::uint64_t>();
    try {
        for (auto& layer : state.layers) {
            get_scalars(r, layer.weight.data(), layer.weight.size(), version);
            get_scalars(r, layer.bias.data(), layer.bias.size(), version);
        }
        get_scalars(r, state.input_shift.data(), state.input_shift.size(), version);
        get_scalars(r, state.input_scale.data(), state.input_scale.size(), version);
        for (auto& buf : state.momentum) {
            get_scalars(r, buf.weight.data(), buf.weight.size(), version);
            get_scalars(r, buf.bias.data(), buf.bias.size(), version);
        }
    } catch (const FormatError& e) {
        throw CheckpointError(e.what());
    }
    if (r.remaining() != 0) throw CheckpointError("encoder: trailing bytes at offset " + std::to_string(r.offset()));
    return state;
}

}  // namespace invp
