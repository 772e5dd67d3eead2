#pragma once

// Dense-network substrate: flat parameter storage, batched forward/backward
// passes, Adam and a central-difference gradient oracle.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace dwbc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh, identity };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

/// Shape of a fully connected network. The output layer is always linear;
/// `activations` holds one entry per hidden layer.
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;
    std::vector<Activation> activations;
    std::uint64_t seed = 0;

    /// Builds a spec with the same activation on every hidden layer.
    static MlpSpec uniform(std::vector<std::size_t> sizes, Activation act, std::uint64_t seed);

    void validate() const;
    std::size_t num_layers() const { return layer_sizes.size() - 1; }
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t param_count() const;
};

/// Location of one dense layer inside a flat parameter vector. Weights are
/// stored row-major as (out x in).
struct LayerSlice {
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
    std::size_t in = 0;
    std::size_t out = 0;
};

std::vector<LayerSlice> layer_layout(const MlpSpec& spec, std::size_t base_offset = 0);

/// Flat parameter storage for one or more networks laid out back to back.
struct ParamVector {
    std::vector<double> values;
    std::vector<LayerSlice> layout;
    /// Start offset of each network block when several specs share storage.
    std::vector<std::size_t> block_offsets;

    static ParamVector zeros(const MlpSpec& spec);
    static ParamVector zeros(std::span<const MlpSpec> specs);
    static ParamVector unflatten(std::span<const MlpSpec> specs, std::span<const double> flat);

    std::size_t size() const { return values.size(); }
    std::span<double> span() { return values; }
    std::span<const double> span() const { return values; }
    std::span<const double> block(std::size_t i, const MlpSpec& spec) const;
    std::span<double> block(std::size_t i, const MlpSpec& spec);
    std::vector<double> flatten() const { return values; }
};

/// Fan-in scaled uniform weights U(-1/sqrt(in), 1/sqrt(in)), zero biases.
ParamVector init_params(const MlpSpec& spec);
void init_block(const MlpSpec& spec, std::span<double> block);

/// Per-layer activations recorded by a batched forward pass.
struct MlpTape {
    std::vector<Matrix> inputs;  // input to layer l, rows = samples
    std::vector<Matrix> pre;     // pre-activation output of layer l
};

/// Single-sample forward pass.
std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input);
std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input);

/// Batched forward pass; rows of `input` are samples.
Matrix mlp_forward_batch(const MlpSpec& spec, std::span<const double> params, const Matrix& input,
                         MlpTape* tape = nullptr);

/// Reverse pass for `mlp_forward_batch`. Accumulates into `grad` (same layout
/// as `params`) and optionally returns the gradient w.r.t. the input.
void mlp_backward_batch(const MlpSpec& spec, std::span<const double> params, const MlpTape& tape,
                        const Matrix& d_output, std::span<double> grad, Matrix* d_input = nullptr);

struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(std::size_t n, double lr);
};

/// In-place Adam update with bias-corrected moments.
void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads);

std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            std::span<const double> grads);

/// Decoupled weight decay: p <- p - lr * decay * p.
void apply_weight_decay(std::span<double> params, double lr, double decay);

using ScalarFn = std::function<double(std::span<const double>)>;

/// Central differences (f(p + h e_i) - f(p - h e_i)) / 2h for every coordinate.
std::vector<double> finite_diff_grad(const ScalarFn& loss, std::span<const double> params, double h);

/// max_i |a_i - b_i| / max(|a_i|, |b_i|, floor)
double max_relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-6);

}  // namespace dwbc
