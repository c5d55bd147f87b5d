#include "hda/hdan.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "hda/rng.hpp"

namespace hda {

std::vector<Tensor*> HdanModel::parameters() {
    std::vector<Tensor*> out = encoder.parameters();
    auto append = [&out](std::vector<Tensor*> ps) {
        out.insert(out.end(), ps.begin(), ps.end());
    };
    append(fundament_head.parameters());
    for (auto& head : heuristic_heads) append(head.parameters());
    append(discriminator.parameters());
    return out;
}

void HdanModel::zero_grad() {
    for (Tensor* p : parameters()) p->zero_grad();
}

double heuristic_sigma(int k) {
    if (k < 1) throw std::invalid_argument("heuristic_sigma: k is 1-based, got " + std::to_string(k));
    return 0.1 * std::pow(2.0, k - 1);
}

HdanModel build_model(int d_in, int hidden, int num_classes, int num_heads, int num_domains,
                      std::uint64_t seed) {
    if (d_in < 1 || hidden < 1 || num_classes < 2 || num_domains < 2)
        throw std::invalid_argument("build_model: invalid dims (d_in " + std::to_string(d_in) +
                                    ", hidden " + std::to_string(hidden) + ", classes " +
                                    std::to_string(num_classes) + ", domains " +
                                    std::to_string(num_domains) + ")");
    if (num_heads < 1)
        throw std::invalid_argument("build_model: need at least one heuristic head, got " +
                                    std::to_string(num_heads));

    Rng rng(seed);
    HdanModel m;
    m.num_classes = num_classes;
    m.num_domains = num_domains;
    m.encoder = init_mlp({d_in, hidden, hidden},
                         InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(d_in))),
                         InitSpec::gaussian(kEncoderOutputInitStd / std::sqrt(static_cast<double>(hidden))),
                         rng.fork(0).seed());
    m.fundament_head = init_mlp({hidden, num_classes}, InitSpec::zeros(),
                                InitSpec::gaussian(kFundamentInitStd), rng.fork(1).seed());
    for (int k = 1; k <= num_heads; ++k) {
        m.heuristic_heads.push_back(init_mlp({hidden, num_classes}, InitSpec::zeros(),
                                             InitSpec::gaussian(heuristic_sigma(k)),
                                             rng.fork(1 + k).seed()));
    }
    m.discriminator = init_mlp({num_classes, hidden, num_domains},
                               InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(num_classes))),
                               InitSpec::gaussian(0.01), rng.fork(2 + num_heads).seed());
    return m;
}

ForwardOut forward(const HdanModel& model, const Tensor& x) {
    ForwardOut out;
    const Tensor z = model.encoder.forward(x);
    out.f = model.fundament_head.forward(z);
    for (const auto& head : model.heuristic_heads) out.h_parts.push_back(head.forward(z));
    if (out.h_parts.empty()) {
        out.h_total = Tensor::zeros(out.f.shape());
    } else {
        out.h_total = out.h_parts[0];
        for (std::size_t k = 1; k < out.h_parts.size(); ++k)
            out.h_total = add(out.h_total, out.h_parts[k]);
    }
    out.g = sub(out.f, out.h_total);
    return out;
}

Tensor classification_loss(const Tensor& g_labeled, const std::vector<int>& labels,
                           const std::vector<double>& weights) {
    return softmax_cross_entropy(g_labeled, labels, weights);
}

Tensor transfer_loss(const HdanModel& model, const std::vector<DomainGroup>& groups, double lambda,
                     DiscriminatorInput input) {
    if (groups.size() < 2)
        throw std::invalid_argument("transfer_loss: need at least two domain groups, got " +
                                    std::to_string(groups.size()));
    if (lambda < 0.0)
        throw std::invalid_argument("transfer_loss: lambda must be nonnegative");
    std::unordered_set<int> ids;
    std::size_t total = 0;
    for (const auto& g : groups) {
        if (g.domain_id < 0 || g.domain_id >= model.num_domains)
            throw std::invalid_argument("transfer_loss: domain id " + std::to_string(g.domain_id) +
                                        " out of range [0, " + std::to_string(model.num_domains) + ")");
        ids.insert(g.domain_id);
        total += static_cast<std::size_t>(g.g.rows());
    }
    if (ids.size() < 2)
        throw std::invalid_argument("transfer_loss: groups cover a single domain id");

    Tensor loss = Tensor::scalar(0.0);
    for (const auto& group : groups) {
        const int n = group.g.rows();
        const Tensor responses =
            input == DiscriminatorInput::Softmax ? softmax_rows(group.g) : group.g;
        const Tensor reversed = grad_reverse(responses, lambda);
        const Tensor d_logits = model.discriminator.forward(reversed);
        const std::vector<int> domain_labels(n, group.domain_id);
        const Tensor ce = softmax_cross_entropy(d_logits, domain_labels, group.weights);
        loss = add(loss, scale(ce, static_cast<double>(n) / static_cast<double>(total)));
    }
    return loss;
}

Tensor heuristic_loss(const Tensor& h_total, HeuristicNorm norm) {
    if (!h_total.defined() || h_total.size() == 0)
        throw std::invalid_argument("heuristic_loss: empty input");
    if (norm == HeuristicNorm::L1) return l1_mean(h_total);
    return mean(mul(h_total, h_total));
}

std::vector<double> entropy_weights(const Tensor& g_unlabeled) {
    const int n = g_unlabeled.rows();
    const int c = g_unlabeled.cols();
    const auto& v = g_unlabeled.values();
    std::vector<double> w(n);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = v[i * c];
        for (int j = 1; j < c; ++j) mx = std::max(mx, v[i * c + j]);
        double z = 0.0;
        for (int j = 0; j < c; ++j) z += std::exp(v[i * c + j] - mx);
        double entropy = 0.0;
        for (int j = 0; j < c; ++j) {
            const double p = std::exp(v[i * c + j] - mx) / z;
            if (p > 0.0) entropy -= p * std::log(p);
        }
        w[i] = 1.0 + std::exp(-entropy);
        total += w[i];
    }
    const double mean_w = total / n;
    for (double& x : w) x /= mean_w;
    return w;
}

LossBundle total_loss(Tensor l_cls, Tensor l_trans, Tensor l_h, double mu) {
    LossBundle b;
    b.l_f = add(add(l_cls, l_trans), scale(l_h, mu));
    b.l_cls = std::move(l_cls);
    b.l_trans = std::move(l_trans);
    b.l_h = std::move(l_h);
    return b;
}

namespace {

// Column-wise excess kurtosis of a batch, kept on the tape.
Tensor kurtosis_cols(const Tensor& x) {
    const Tensor mu = col_mean(x);
    const Tensor centered = sub_rowvec(x, mu);
    const Tensor var = col_mean(mul(centered, centered));
    const Tensor inv_std = pow_const(add(var, 1e-8), -0.5);
    const Tensor normalized = mul_rowvec(centered, inv_std);
    const Tensor n2 = mul(normalized, normalized);
    const Tensor m2 = col_mean(n2);
    const Tensor m4 = col_mean(mul(n2, n2));
    return mean(sub(m4, scale(mul(m2, m2), 3.0)));
}

}  // namespace

Tensor independence_gap_loss(const Tensor& f, const Tensor& g) {
    if (f.shape() != g.shape())
        throw std::invalid_argument("independence_gap_loss: shape mismatch " +
                                    shape_to_string(f.shape()) + " vs " + shape_to_string(g.shape()));
    if (f.rows() < 4)
        throw std::invalid_argument("independence_gap_loss: need at least 4 rows, got " +
                                    std::to_string(f.rows()));
    return abs(sub(kurtosis_cols(f), kurtosis_cols(g)));
}

}  // namespace hda
