#pragma once

#include <cstdint>
#include <vector>

#include "hda/nn.hpp"
#include "hda/tensor.hpp"

namespace hda {

// Shared encoder trunk with a fundament head F, an additive ensemble of
// heuristic heads H = sum_k H^k, the derived transferable output
// G = F - H, and a domain discriminator fed softmax(G).
struct HdanModel {
    Mlp encoder;                       // [d, hidden, hidden]
    Mlp fundament_head;                // [hidden, C], final weights near zero
    std::vector<Mlp> heuristic_heads;  // [hidden, C] each, ladder of init scales
    Mlp discriminator;                 // [C, hidden, num_domains]
    int num_classes = 0;
    int num_domains = 0;

    int num_heads() const { return static_cast<int>(heuristic_heads.size()); }
    std::vector<Tensor*> parameters();
    void zero_grad();
};

struct ForwardOut {
    Tensor f;                    // [n x C]
    Tensor h_total;              // [n x C], sum of parts (zero tensor when no heads)
    Tensor g;                    // [n x C], f - h_total
    std::vector<Tensor> h_parts; // M tensors [n x C]
};

struct LossBundle {
    Tensor l_cls;
    Tensor l_trans;
    Tensor l_h;
    Tensor l_f;  // l_cls + l_trans + mu * l_h
};

// Init scale of heuristic head k (1-based): 0.1 * 2^(k-1). Distinct scales
// give each subnetwork a distinct output range.
double heuristic_sigma(int k);

// Fundament final-layer scale: near zero but nonzero so step-0 gradients are
// nondegenerate. Guarantees cos(G, H) <= -0.99 on any nondegenerate batch.
inline constexpr double kFundamentInitStd = 1e-3;

// Scale multiplier on the encoder's final-layer init. Keeps the encoder
// output small at step 0 so the sigma ladder produces modest initial logits
// and the minimax game opens gently instead of from saturated responses.
inline constexpr double kEncoderOutputInitStd = 0.2;


HdanModel build_model(int d_in, int hidden, int num_classes, int num_heads, int num_domains,
                      std::uint64_t seed);

ForwardOut forward(const HdanModel& model, const Tensor& x);

// Softmax cross-entropy on G rows of labeled samples.
Tensor classification_loss(const Tensor& g_labeled, const std::vector<int>& labels,
                           const std::vector<double>& weights = {});

struct DomainGroup {
    Tensor g;                     // [n x C] transferable outputs of one domain
    int domain_id = 0;
    std::vector<double> weights;  // optional per-sample conditioning weights
};

enum class DiscriminatorInput { Softmax, RawLogits };

// Adversarial discrepancy on classification responses: softmax(G) (or raw G)
// passes a gradient-reversal layer into the discriminator; cross-entropy
// against the domain id, averaged over all samples of all groups.
Tensor transfer_loss(const HdanModel& model, const std::vector<DomainGroup>& groups, double lambda,
                     DiscriminatorInput input = DiscriminatorInput::Softmax);

enum class HeuristicNorm { L1, L2 };

// Termination penalty on the heuristic range: mean |h| over every element of
// every domain (L2 variant: mean of squares).
Tensor heuristic_loss(const Tensor& h_total, HeuristicNorm norm = HeuristicNorm::L1);

// w_i = 1 + exp(-entropy(softmax(g_i))), normalized to mean 1 and detached.
std::vector<double> entropy_weights(const Tensor& g_unlabeled);

LossBundle total_loss(Tensor l_cls, Tensor l_trans, Tensor l_h, double mu);

// Differentiable |kurt(f) - kurt(g)| over batch columns, for the optional
// independence penalty. The monitored diagnostic lives in diagnostics.
Tensor independence_gap_loss(const Tensor& f, const Tensor& g);

}  // namespace hda
