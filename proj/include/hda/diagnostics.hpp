#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hda/data.hpp"
#include "hda/hdan.hpp"
#include "hda/tensor.hpp"

namespace hda {

// Per-epoch measurement snapshot; matches the metrics.csv schema.
struct MetricsRecord {
    int epoch = 0;
    double l_cls = 0.0;
    double l_trans = 0.0;
    double l_h = 0.0;
    double cos_gh = 0.0;
    double kurt_f = 0.0;
    double kurt_g = 0.0;
    double kurt_gap = 0.0;
    std::vector<double> h_part_ranges;  // one per heuristic head
    double head_pair_cos = 0.0;         // mean over k != k'
    double probe_acc_g = 0.0;
    double probe_acc_h = 0.0;
    double target_acc = 0.0;
};

// Mean column-wise excess kurtosis: each column is normalized to zero mean
// and unit variance (denominator guarded at 1e-8), then
// kurt = E[N^4] - 3 (E[N^2])^2. Columns with variance below 1e-12 are
// skipped; n must be >= 4.
double kurtosis(const Tensor& x);

// Signed nongaussianity discrepancy kurt(f) - kurt(g).
double nongauss_gap(const Tensor& f, const Tensor& g);

struct Cosine {
    double value = 0.0;
    bool degenerate = false;  // a norm fell below 1e-12; value forced to 0
};

Cosine cosine(std::span<const double> a, std::span<const double> b);

// Mean of per-row cosines between two [n x d] tensors.
double batch_cosine(const Tensor& a, const Tensor& b);

struct HeadDiagnostics {
    std::vector<double> ranges;                    // l1_mean of each head output
    std::vector<std::vector<double>> pairwise_cos; // batch-mean cosines, M x M
    double mean_offdiag() const;                   // 0 when fewer than 2 heads
};

HeadDiagnostics head_diagnostics(const ForwardOut& fw);

// Held-out domain-classification accuracy of a fresh probe trained on frozen
// representations: 16 hidden units, 200 full-batch SGD epochs at lr 0.1 on a
// seeded 80/20 split. Never propagates into the probed model.
double domain_probe(const Tensor& reps, const std::vector<int>& domain_labels, std::uint64_t seed);

// Mean over samples of the mean absolute difference between two hypotheses'
// outputs.
double disagreement_risk(const Tensor& f1_out, const Tensor& f2_out);

// Constructs h = k (f - f*), g = f - h, g* = f* and reports how exactly the
// decomposition algebra holds: (1-k)(f - f*) = g - g* elementwise, and the
// disagreement risk scales by (1-k).
struct BoundReport {
    double max_identity_residual = 0.0;  // max |(1-k)(f - f*) - (g - g*)|
    double risk_g = 0.0;                 // disagreement_risk(g, g*)
    double risk_f_scaled = 0.0;          // (1-k) * disagreement_risk(f, f*)
    double risk_residual = 0.0;          // |risk_g - risk_f_scaled|
};

BoundReport bound_identity_check(const Tensor& f, const Tensor& f_star, double k);

// Fraction of argmax(softmax(G(x))) matching the evaluation labels.
double target_accuracy(const HdanModel& model, const DomainDataset& target_eval);

// Central finite-difference check of reverse-mode gradients. loss_fn must
// rebuild a fresh graph from the current parameter values on every call.
struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
};

GradCheckResult gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<Tensor*>& params, double step = 1e-5,
                               double denom_floor = 1e-6);

}  // namespace hda
