#include "hda/nn.hpp"

#include <cmath>
#include <stdexcept>

#include "hda/rng.hpp"

namespace hda {

InitSpec InitSpec::gaussian(double stddev) {
    if (stddev < 0.0)
        throw std::invalid_argument("InitSpec: gaussian stddev must be nonnegative, got " + std::to_string(stddev));
    InitSpec s;
    s.kind = Kind::gaussian;
    s.stddev = stddev;
    return s;
}

namespace {

Tensor draw_weight(int in, int out, const InitSpec& spec, Rng& rng) {
    std::vector<double> w(static_cast<std::size_t>(in) * out, 0.0);
    if (spec.kind == InitSpec::Kind::gaussian) {
        for (double& v : w) v = rng.normal(0.0, spec.stddev);
    }
    return Tensor({in, out}, std::move(w), /*requires_grad=*/true);
}

}  // namespace

Mlp init_mlp(const std::vector<int>& dims, InitSpec hidden_init, InitSpec final_init,
             std::uint64_t seed, Activation activation) {
    if (dims.size() < 2)
        throw std::invalid_argument("init_mlp: need at least input and output dims, got " +
                                    std::to_string(dims.size()));
    for (int d : dims)
        if (d <= 0) throw std::invalid_argument("init_mlp: dims must be positive");

    Rng rng(seed);
    Mlp m;
    m.activation = activation;
    const std::size_t layers = dims.size() - 1;
    for (std::size_t l = 0; l < layers; ++l) {
        const InitSpec& spec = (l + 1 == layers) ? final_init : hidden_init;
        m.weights.push_back(draw_weight(dims[l], dims[l + 1], spec, rng));
        m.biases.push_back(Tensor::zeros({dims[l + 1]}, /*requires_grad=*/true));
    }
    return m;
}

Tensor Mlp::forward(const Tensor& x) const {
    if (weights.empty()) throw std::logic_error("Mlp::forward: uninitialized model");
    if (x.shape().size() != 2 || x.cols() != input_dim())
        throw std::invalid_argument("Mlp::forward: input " + shape_to_string(x.shape()) +
                                    " does not match first layer input dim " + std::to_string(input_dim()));
    Tensor h = x;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        h = add_rowvec(matmul(h, weights[l]), biases[l]);
        if (l + 1 < weights.size())
            h = (activation == Activation::Tanh) ? tanh(h) : relu(h);
    }
    return h;
}

std::vector<Tensor*> Mlp::parameters() {
    std::vector<Tensor*> out;
    for (auto& w : weights) out.push_back(&w);
    for (auto& b : biases) out.push_back(&b);
    return out;
}

void Mlp::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

int Mlp::input_dim() const {
    if (weights.empty()) throw std::logic_error("Mlp: uninitialized model");
    return weights.front().shape()[0];
}

int Mlp::output_dim() const {
    if (weights.empty()) throw std::logic_error("Mlp: uninitialized model");
    return weights.back().shape()[1];
}

void sgd_step(const std::vector<Tensor*>& params, SgdState& state) {
    for (Tensor* p : params) {
        if (!p->has_grad())
            throw std::runtime_error("sgd_step: parameter " + shape_to_string(p->shape()) +
                                     " has no gradient");
        auto& v = state.velocity[p->node().get()];
        if (v.empty()) v.assign(p->size(), 0.0);
        auto& w = p->values();
        const auto& g = p->grad();
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = state.momentum * v[i] + g[i] + state.weight_decay * w[i];
            w[i] -= state.lr * v[i];
        }
    }
}

double lambda_schedule(double progress, double gamma) {
    if (!(progress >= 0.0 && progress <= 1.0))
        throw std::invalid_argument("lambda_schedule: progress must be in [0, 1], got " +
                                    std::to_string(progress));
    if (gamma <= 0.0)
        throw std::invalid_argument("lambda_schedule: gamma must be positive, got " + std::to_string(gamma));
    return 2.0 / (1.0 + std::exp(-gamma * progress)) - 1.0;
}

}  // namespace hda
