#pragma once

#include <cstdint>
#include <unordered_map>
#include <vector>

#include "hda/tensor.hpp"

namespace hda {

struct InitSpec {
    enum class Kind { gaussian, zeros };
    Kind kind = Kind::zeros;
    double stddev = 0.0;

    static InitSpec gaussian(double stddev);
    static InitSpec zeros() { return InitSpec{}; }
};

enum class Activation { Tanh, Relu };

// Fully connected stack: tanh (or relu) on hidden layers, identity on the
// final layer. Biases are zero-initialized and trainable.
struct Mlp {
    std::vector<Tensor> weights;  // [in x out] each
    std::vector<Tensor> biases;   // [out] each
    Activation activation = Activation::Tanh;

    Tensor forward(const Tensor& x) const;
    std::vector<Tensor*> parameters();
    void zero_grad();
    int input_dim() const;
    int output_dim() const;
    int num_layers() const { return static_cast<int>(weights.size()); }
};

// hidden_init covers every layer but the last; final_init covers the last.
Mlp init_mlp(const std::vector<int>& dims, InitSpec hidden_init, InitSpec final_init,
             std::uint64_t seed, Activation activation = Activation::Tanh);

// SGD with momentum and weight decay:
//   v <- momentum * v + g + weight_decay * w;  w <- w - lr * v
struct SgdState {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    std::unordered_map<const detail::Node*, std::vector<double>> velocity;
};

void sgd_step(const std::vector<Tensor*>& params, SgdState& state);

// Gradient-reversal warmup: 2 / (1 + exp(-gamma * progress)) - 1, monotone
// from 0 at progress 0 toward 1.
double lambda_schedule(double progress, double gamma);

}  // namespace hda
