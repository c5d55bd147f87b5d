#include "hda/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hda/rng.hpp"

namespace hda {

double kurtosis(const Tensor& xt) {
    if (xt.shape().size() != 2)
        throw std::invalid_argument("kurtosis: expected rank-2 tensor, got " +
                                    shape_to_string(xt.shape()));
    const int n = xt.rows(), d = xt.cols();
    if (n < 4) throw std::invalid_argument("kurtosis: need at least 4 rows, got " + std::to_string(n));
    const auto& x = xt.values();

    double total = 0.0;
    int used = 0;
    for (int j = 0; j < d; ++j) {
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += x[i * d + j];
        mu /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = x[i * d + j] - mu;
            var += c * c;
        }
        var /= n;
        if (var < 1e-12) continue;  // near-constant column, no shape information
        const double inv_std = 1.0 / std::sqrt(std::max(var, 1e-8));
        double m2 = 0.0, m4 = 0.0;
        for (int i = 0; i < n; ++i) {
            const double z = (x[i * d + j] - mu) * inv_std;
            const double z2 = z * z;
            m2 += z2;
            m4 += z2 * z2;
        }
        m2 /= n;
        m4 /= n;
        total += m4 - 3.0 * m2 * m2;
        ++used;
    }
    if (used == 0) throw std::invalid_argument("kurtosis: every column is degenerate");
    return total / used;
}

double nongauss_gap(const Tensor& f, const Tensor& g) {
    return kurtosis(f) - kurtosis(g);
}

Cosine cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    na = std::sqrt(na);
    nb = std::sqrt(nb);
    if (na < 1e-12 || nb < 1e-12) return {0.0, true};
    return {std::clamp(dot / (na * nb), -1.0, 1.0), false};
}

double batch_cosine(const Tensor& at, const Tensor& bt) {
    if (at.shape() != bt.shape())
        throw std::invalid_argument("batch_cosine: shape mismatch " + shape_to_string(at.shape()) +
                                    " vs " + shape_to_string(bt.shape()));
    const int n = at.rows(), d = at.cols();
    const auto& a = at.values();
    const auto& b = bt.values();
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        total += cosine({a.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)},
                        {b.data() + static_cast<std::size_t>(i) * d, static_cast<std::size_t>(d)})
                     .value;
    }
    return total / n;
}

double HeadDiagnostics::mean_offdiag() const {
    const std::size_t m = pairwise_cos.size();
    if (m < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) total += pairwise_cos[i][j];
    return total / static_cast<double>(m * (m - 1));
}

HeadDiagnostics head_diagnostics(const ForwardOut& fw) {
    HeadDiagnostics out;
    const std::size_t m = fw.h_parts.size();
    for (const auto& part : fw.h_parts) {
        double acc = 0.0;
        for (double v : part.values()) acc += std::fabs(v);
        out.ranges.push_back(acc / part.size());
    }
    out.pairwise_cos.assign(m, std::vector<double>(m, 0.0));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = i; j < m; ++j) {
            const double c = batch_cosine(fw.h_parts[i], fw.h_parts[j]);
            out.pairwise_cos[i][j] = c;
            out.pairwise_cos[j][i] = c;
        }
    return out;
}

double domain_probe(const Tensor& reps, const std::vector<int>& domain_labels, std::uint64_t seed) {
    const int n = reps.rows();
    const int d = reps.cols();
    if (static_cast<int>(domain_labels.size()) != n)
        throw std::invalid_argument("domain_probe: " + std::to_string(domain_labels.size()) +
                                    " labels for " + std::to_string(n) + " rows");
    int num_domains = 0;
    for (int y : domain_labels) num_domains = std::max(num_domains, y + 1);
    if (num_domains < 2) throw std::invalid_argument("domain_probe: need at least 2 domains");

    Rng rng(seed);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    const int n_train = std::max(1, (n * 8) / 10);
    const int n_test = n - n_train;
    if (n_test < 1) throw std::invalid_argument("domain_probe: too few rows for a held-out split");

    // Standardize per column so the probe measures information content, not
    // representation scale; a terminated H would otherwise read as chance
    // regardless of what its direction still encodes.
    std::vector<double> src = reps.values();
    for (int j = 0; j < d; ++j) {
        double mu = 0.0;
        for (int i = 0; i < n; ++i) mu += src[static_cast<std::size_t>(i) * d + j];
        mu /= n;
        double var = 0.0;
        for (int i = 0; i < n; ++i) {
            const double c = src[static_cast<std::size_t>(i) * d + j] - mu;
            var += c * c;
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(std::max(var, 1e-24));
        for (int i = 0; i < n; ++i) {
            auto& v = src[static_cast<std::size_t>(i) * d + j];
            v = (v - mu) * inv;
        }
    }
    auto gather = [&](int begin, int count, std::vector<int>& ys) {
        std::vector<double> xs(static_cast<std::size_t>(count) * d);
        ys.resize(count);
        for (int r = 0; r < count; ++r) {
            const int row = order[begin + r];
            for (int j = 0; j < d; ++j) xs[static_cast<std::size_t>(r) * d + j] = src[static_cast<std::size_t>(row) * d + j];
            ys[r] = domain_labels[row];
        }
        return Tensor({count, d}, std::move(xs));
    };
    std::vector<int> y_train, y_test;
    const Tensor x_train = gather(0, n_train, y_train);
    const Tensor x_test = gather(n_train, n_test, y_test);

    Mlp probe = init_mlp({d, 16, num_domains},
                         InitSpec::gaussian(1.0 / std::sqrt(static_cast<double>(d))),
                         InitSpec::gaussian(0.1), rng.fork(1).seed());
    SgdState opt;
    opt.lr = 0.1;
    opt.momentum = 0.9;
    opt.weight_decay = 0.0;
    auto params = probe.parameters();
    for (int epoch = 0; epoch < 200; ++epoch) {
        const Tensor loss = softmax_cross_entropy(probe.forward(x_train), y_train);
        backward(loss);
        sgd_step(params, opt);
        probe.zero_grad();
    }

    const Tensor logits = probe.forward(x_test);
    const auto& lv = logits.values();
    int correct = 0;
    for (int i = 0; i < n_test; ++i) {
        int best = 0;
        for (int j = 1; j < num_domains; ++j)
            if (lv[i * num_domains + j] > lv[i * num_domains + best]) best = j;
        if (best == y_test[i]) ++correct;
    }
    return static_cast<double>(correct) / n_test;
}

double disagreement_risk(const Tensor& f1, const Tensor& f2) {
    if (f1.shape() != f2.shape())
        throw std::invalid_argument("disagreement_risk: shape mismatch " +
                                    shape_to_string(f1.shape()) + " vs " + shape_to_string(f2.shape()));
    const auto& a = f1.values();
    const auto& b = f2.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
    return acc / a.size();
}

BoundReport bound_identity_check(const Tensor& f, const Tensor& f_star, double k) {
    if (f.shape() != f_star.shape())
        throw std::invalid_argument("bound_identity_check: shape mismatch " +
                                    shape_to_string(f.shape()) + " vs " +
                                    shape_to_string(f_star.shape()));
    if (!(k > 0.0 && k <= 1.0))
        throw std::invalid_argument("bound_identity_check: k must be in (0, 1], got " +
                                    std::to_string(k));
    const auto& fv = f.values();
    const auto& sv = f_star.values();
    const std::size_t n = fv.size();

    std::vector<double> g(n), g_star(sv.begin(), sv.end());
    BoundReport report;
    for (std::size_t i = 0; i < n; ++i) {
        const double h = k * (fv[i] - sv[i]);
        g[i] = fv[i] - h;
        const double lhs = (1.0 - k) * (fv[i] - sv[i]);
        const double rhs = g[i] - g_star[i];
        report.max_identity_residual = std::max(report.max_identity_residual, std::fabs(lhs - rhs));
    }
    const Tensor gt(f.shape(), std::move(g));
    const Tensor gst(f.shape(), std::move(g_star));
    report.risk_g = disagreement_risk(gt, gst);
    report.risk_f_scaled = (1.0 - k) * disagreement_risk(f, f_star);
    report.risk_residual = std::fabs(report.risk_g - report.risk_f_scaled);
    return report;
}

double target_accuracy(const HdanModel& model, const DomainDataset& target_eval) {
    if (!target_eval.labeled())
        throw std::invalid_argument("target_accuracy: evaluation set carries no labels");
    const ForwardOut fw = forward(model, target_eval.x);
    const auto& g = fw.g.values();
    const int n = target_eval.n();
    const int c = model.num_classes;
    int correct = 0;
    for (int i = 0; i < n; ++i) {
        int best = 0;
        for (int j = 1; j < c; ++j)
            if (g[i * c + j] > g[i * c + best]) best = j;
        if (best == target_eval.y[i]) ++correct;
    }
    return static_cast<double>(correct) / n;
}

GradCheckResult gradient_check(const std::function<Tensor()>& loss_fn,
                               const std::vector<Tensor*>& params, double step,
                               double denom_floor) {
    for (Tensor* p : params) p->zero_grad();
    backward(loss_fn());
    std::vector<std::vector<double>> analytic;
    analytic.reserve(params.size());
    for (Tensor* p : params) {
        if (!p->has_grad())
            analytic.emplace_back(p->size(), 0.0);
        else
            analytic.push_back(p->grad());
    }

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& w = params[pi]->values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + step;
            const double up = loss_fn().item();
            w[i] = saved - step;
            const double down = loss_fn().item();
            w[i] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic[pi][i];
            const double rel = std::fabs(a - numeric) /
                               std::max({std::fabs(a), std::fabs(numeric), denom_floor});
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.checked;
        }
    }
    for (Tensor* p : params) p->zero_grad();
    return result;
}

}  // namespace hda
