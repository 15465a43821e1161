#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "invp/types.hpp"

namespace invp {

// Affine map x -> x W + b with W of shape fan_in x fan_out.
struct Affine {
    Matrix weight;
    Vector bias;

    Index fan_in() const { return static_cast<Index>(weight.rows()); }
    Index fan_out() const { return static_cast<Index>(weight.cols()); }
};

// Feed-forward encoder: fixed input standardization, affine layers with
// rectifiers between them, then L2 normalization of the output.
struct EncoderState {
    std::vector<Affine> layers;
    std::vector<Affine> momentum;  // same shapes as layers
    Vector input_shift;
    Vector input_scale;
    std::uint64_t seed = 0;
    // Bumped on every parameter change; tapes remember the value they saw.
    std::uint64_t version = 0;

    Index input_dim() const { return layers.front().fan_in(); }
    Index output_dim() const { return layers.back().fan_out(); }
    std::vector<Index> widths() const;
};

// widths = {input, hidden..., output}. Weights and biases drawn from
// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
EncoderState make_encoder(const std::vector<Index>& widths, std::uint64_t seed);

// Per-feature standardization baked into the encoder (zero-variance
// features keep scale 1).
void set_standardization(EncoderState& state, const Matrix& inputs);

struct Tape {
    std::uint64_t version = 0;
    std::vector<Matrix> layer_inputs;  // input seen by each affine layer
    std::vector<Matrix> pre_activations;
    Matrix features;
    Vector norms;  // denominators used by the normalization
};

struct ForwardResult {
    Matrix features;
    Tape tape;
};

ForwardResult forward(const EncoderState& state, const Matrix& inputs);

// Features only; no tape.
Matrix encode(const EncoderState& state, const Matrix& inputs);

struct Gradients {
    std::vector<Affine> layers;
};

Gradients backward(const EncoderState& state, const Tape& tape, const Matrix& grad_features);

enum class Schedule { constant, step, cosine };

struct OptimizerConfig {
    double learning_rate = 0.03;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    Schedule schedule = Schedule::cosine;
    // step schedule: multiply by step_gamma every step_every epochs
    long step_every = 30;
    double step_gamma = 0.1;
};

// Learning rate for 1-based epoch t out of total.
double scheduled_lr(const OptimizerConfig& config, long t, long total);

// buffer <- momentum * buffer + grad + weight_decay * param; param <- param - lr * buffer.
void sgd_step(EncoderState& state, const Gradients& grads, const OptimizerConfig& config);

// Checkpoint: "IVPE", version, layer widths, then parameter, standardization
// and momentum blobs. Version 1 writes float32 scalars, version 2 float64.
void save_encoder(const std::filesystem::path& path, const EncoderState& state, std::uint32_t version = 1);
EncoderState load_encoder(const std::filesystem::path& path);

}  // namespace invp
