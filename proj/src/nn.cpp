#include "dwbc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dwbc {

namespace {

using RowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void activate(Activation act, Matrix& m) {
    switch (act) {
        case Activation::relu: m = m.cwiseMax(0.0); break;
        case Activation::tanh: m = m.array().tanh().matrix(); break;
        case Activation::identity: break;
    }
}

// d(act)/d(pre) multiplied into `grad` in place.
void activation_backward(Activation act, const Matrix& pre, Matrix& grad) {
    switch (act) {
        case Activation::relu:
            grad = (pre.array() > 0.0).select(grad, 0.0);
            break;
        case Activation::tanh:
            grad.array() *= 1.0 - pre.array().tanh().square();
            break;
        case Activation::identity: break;
    }
}

}  // namespace

std::string to_string(Activation act) {
    switch (act) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw std::invalid_argument("unknown activation '" + name + "'");
}

MlpSpec MlpSpec::uniform(std::vector<std::size_t> sizes, Activation act, std::uint64_t seed) {
    MlpSpec spec;
    const std::size_t hidden = sizes.size() >= 2 ? sizes.size() - 2 : 0;
    spec.layer_sizes = std::move(sizes);
    spec.activations.assign(hidden, act);
    spec.seed = seed;
    spec.validate();
    return spec;
}

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("MlpSpec needs at least an input and an output size");
    }
    for (auto n : layer_sizes) {
        if (n == 0) throw std::invalid_argument("MlpSpec layer sizes must be positive");
    }
    if (activations.size() != layer_sizes.size() - 2) {
        throw std::invalid_argument("MlpSpec needs one activation per hidden layer");
    }
}

std::size_t MlpSpec::param_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        n += layer_sizes[l] * layer_sizes[l + 1] + layer_sizes[l + 1];
    }
    return n;
}

std::vector<LayerSlice> layer_layout(const MlpSpec& spec, std::size_t base_offset) {
    spec.validate();
    std::vector<LayerSlice> out;
    std::size_t offset = base_offset;
    for (std::size_t l = 0; l < spec.num_layers(); ++l) {
        LayerSlice s;
        s.in = spec.layer_sizes[l];
        s.out = spec.layer_sizes[l + 1];
        s.weight_offset = offset;
        s.bias_offset = offset + s.in * s.out;
        offset = s.bias_offset + s.out;
        out.push_back(s);
    }
    return out;
}

ParamVector ParamVector::zeros(const MlpSpec& spec) {
    return zeros(std::span<const MlpSpec>(&spec, 1));
}

ParamVector ParamVector::zeros(std::span<const MlpSpec> specs) {
    ParamVector p;
    std::size_t offset = 0;
    for (const auto& spec : specs) {
        p.block_offsets.push_back(offset);
        auto slices = layer_layout(spec, offset);
        p.layout.insert(p.layout.end(), slices.begin(), slices.end());
        offset += spec.param_count();
    }
    p.values.assign(offset, 0.0);
    return p;
}

ParamVector ParamVector::unflatten(std::span<const MlpSpec> specs, std::span<const double> flat) {
    ParamVector p = zeros(specs);
    if (flat.size() != p.size()) {
        throw std::invalid_argument("flat parameter length " + std::to_string(flat.size()) +
                                    " does not match expected " + std::to_string(p.size()));
    }
    std::copy(flat.begin(), flat.end(), p.values.begin());
    return p;
}

std::span<const double> ParamVector::block(std::size_t i, const MlpSpec& spec) const {
    return std::span<const double>(values).subspan(block_offsets.at(i), spec.param_count());
}

std::span<double> ParamVector::block(std::size_t i, const MlpSpec& spec) {
    return std::span<double>(values).subspan(block_offsets.at(i), spec.param_count());
}

void init_block(const MlpSpec& spec, std::span<double> block) {
    if (block.size() != spec.param_count()) {
        throw std::invalid_argument("parameter block size does not match spec");
    }
    std::mt19937_64 rng(spec.seed);
    for (const auto& s : layer_layout(spec)) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (std::size_t i = 0; i < s.in * s.out; ++i) block[s.weight_offset + i] = dist(rng);
        for (std::size_t i = 0; i < s.out; ++i) block[s.bias_offset + i] = 0.0;
    }
}

ParamVector init_params(const MlpSpec& spec) {
    ParamVector p = ParamVector::zeros(spec);
    init_block(spec, p.span());
    return p;
}

std::vector<double> mlp_forward(const MlpSpec& spec, const ParamVector& params,
                                std::span<const double> input) {
    return mlp_forward(spec, params.span(), input);
}

std::vector<double> mlp_forward(const MlpSpec& spec, std::span<const double> params,
                                std::span<const double> input) {
    if (input.size() != spec.input_size()) {
        throw std::invalid_argument("mlp_forward: input length " + std::to_string(input.size()) +
                                    ", expected " + std::to_string(spec.input_size()));
    }
    Matrix x(1, input.size());
    for (std::size_t i = 0; i < input.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = input[i];
    Matrix y = mlp_forward_batch(spec, params, x);
    return std::vector<double>(y.data(), y.data() + y.size());
}

Matrix mlp_forward_batch(const MlpSpec& spec, std::span<const double> params, const Matrix& input,
                         MlpTape* tape) {
    if (params.size() != spec.param_count()) {
        throw std::invalid_argument("mlp_forward: parameter length does not match spec");
    }
    if (static_cast<std::size_t>(input.cols()) != spec.input_size()) {
        throw std::invalid_argument("mlp_forward: input width " + std::to_string(input.cols()) +
                                    ", expected " + std::to_string(spec.input_size()));
    }
    const auto layout = layer_layout(spec);
    if (tape) {
        tape->inputs.clear();
        tape->pre.clear();
    }
    Matrix h = input;
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const auto& s = layout[l];
        RowMajorMap w(params.data() + s.weight_offset, static_cast<Eigen::Index>(s.out),
                      static_cast<Eigen::Index>(s.in));
        Eigen::Map<const Eigen::RowVectorXd> b(params.data() + s.bias_offset, static_cast<Eigen::Index>(s.out));
        Matrix z = h * w.transpose();
        z.rowwise() += b;
        if (tape) {
            tape->inputs.push_back(std::move(h));
            tape->pre.push_back(z);
        }
        if (l + 1 < layout.size()) activate(spec.activations[l], z);
        h = std::move(z);
    }
    return h;
}

void mlp_backward_batch(const MlpSpec& spec, std::span<const double> params, const MlpTape& tape,
                        const Matrix& d_output, std::span<double> grad, Matrix* d_input) {
    const auto layout = layer_layout(spec);
    if (grad.size() != spec.param_count() || tape.inputs.size() != layout.size()) {
        throw std::invalid_argument("mlp_backward: tape or gradient does not match spec");
    }
    Matrix delta = d_output;
    for (std::size_t li = layout.size(); li-- > 0;) {
        const auto& s = layout[li];
        if (li + 1 < layout.size()) activation_backward(spec.activations[li], tape.pre[li], delta);
        RowMajorMutMap gw(grad.data() + s.weight_offset, static_cast<Eigen::Index>(s.out),
                          static_cast<Eigen::Index>(s.in));
        Eigen::Map<Eigen::RowVectorXd> gb(grad.data() + s.bias_offset, static_cast<Eigen::Index>(s.out));
        gw.noalias() += delta.transpose() * tape.inputs[li];
        gb += delta.colwise().sum();
        if (li > 0 || d_input) {
            RowMajorMap w(params.data() + s.weight_offset, static_cast<Eigen::Index>(s.out),
                          static_cast<Eigen::Index>(s.in));
            Matrix next = delta * w;
            delta = std::move(next);
        }
    }
    if (d_input) *d_input = std::move(delta);
}

AdamState AdamState::for_params(std::size_t n, double lr) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    return s;
}

void adam_update(AdamState& state, std::span<double> params, std::span<const double> grads) {
    if (grads.size() != params.size() || state.m.size() != params.size() ||
        state.v.size() != params.size()) {
        throw std::invalid_argument("adam_step: gradient/moment lengths do not match parameters");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw std::domain_error("adam_step: non-finite gradient at index " + std::to_string(i));
        }
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const double g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        const double m_hat = state.m[i] / c1;
        const double v_hat = state.v[i] / c2;
        params[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
}

std::pair<ParamVector, AdamState> adam_step(const AdamState& state, const ParamVector& params,
                                            std::span<const double> grads) {
    std::pair<ParamVector, AdamState> out{params, state};
    adam_update(out.second, out.first.span(), grads);
    return out;
}

void apply_weight_decay(std::span<double> params, double lr, double decay) {
    const double scale = 1.0 - lr * decay;
    for (auto& p : params) p *= scale;
}

std::vector<double> finite_diff_grad(const ScalarFn& loss, std::span<const double> params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: step size must be positive");
    std::vector<double> p(params.begin(), params.end());
    std::vector<double> grad(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double orig = p[i];
        p[i] = orig + h;
        const double up = loss(p);
        p[i] = orig - h;
        const double down = loss(p);
        p[i] = orig;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw std::domain_error("finite_diff_grad: non-finite loss at coordinate " + std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

double max_relative_error(std::span<const double> a, std::span<const double> b, double floor) {
    if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: length mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace dwbc
