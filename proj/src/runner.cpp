#include "hda/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "CLI11.hpp"
#include "hda/rng.hpp"
#include "json.hpp"

namespace hda {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Cycling shuffled index stream over one domain pool; reshuffles on wrap so
// small pools (ssda labeled targets) can fill equal-size sub-batches.
struct Pool {
    const DomainDataset* ds = nullptr;
    int domain_id = 0;       // discriminator class
    int probe_domain = 0;    // physical domain, used for probes
    bool labeled = false;
    std::vector<int> order;
    std::size_t cursor = 0;
    Rng rng{0};

    void reset(Rng pool_rng) {
        rng = pool_rng;
        order.resize(ds->n());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        cursor = 0;
    }

    std::vector<int> next(int count) {
        std::vector<int> out;
        out.reserve(count);
        while (static_cast<int>(out.size()) < count) {
            if (cursor >= order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            out.push_back(order[cursor++]);
        }
        return out;
    }
};

struct StepBatch {
    Tensor x;                       // concatenated rows, labeled pools first
    std::vector<int> labels;        // for the labeled prefix
    int labeled_rows = 0;
    std::vector<int> offsets;       // row offset per pool
    std::vector<int> counts;        // rows per pool
};

StepBatch gather_batch(const std::vector<Pool>& pools, const std::vector<std::vector<int>>& rows) {
    StepBatch batch;
    const int d = pools[0].ds->dim();
    int total = 0;
    for (const auto& r : rows) total += static_cast<int>(r.size());
    std::vector<double> xs(static_cast<std::size_t>(total) * d);
    int at = 0;
    for (std::size_t p = 0; p < pools.size(); ++p) {
        batch.offsets.push_back(at);
        batch.counts.push_back(static_cast<int>(rows[p].size()));
        const auto& src = pools[p].ds->x.values();
        for (int idx : rows[p]) {
            for (int j = 0; j < d; ++j)
                xs[static_cast<std::size_t>(at) * d + j] = src[static_cast<std::size_t>(idx) * d + j];
            if (pools[p].labeled) batch.labels.push_back(pools[p].ds->y[idx]);
            ++at;
        }
        if (pools[p].labeled) batch.labeled_rows = at;
    }
    batch.x = Tensor({total, d}, std::move(xs));
    return batch;
}

double max_decomposition_residual(const ForwardOut& fw) {
    const auto& f = fw.f.values();
    const auto& h = fw.h_total.values();
    const auto& g = fw.g.values();
    double worst = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i)
        worst = std::max(worst, std::fabs(g[i] + h[i] - f[i]));
    return worst;
}

struct StepLosses {
    LossBundle bundle;
    Tensor objective;  // bundle.l_f plus the optional independence penalty
    ForwardOut fw;
};

StepLosses compute_losses(const HdanModel& model, const ExperimentConfig& cfg,
                          const std::vector<Pool>& pools, const StepBatch& batch, double lambda) {
    StepLosses out;
    out.fw = forward(model, batch.x);

    Tensor l_cls = classification_loss(take_rows(out.fw.g, 0, batch.labeled_rows), batch.labels);
    Tensor l_trans = Tensor::scalar(0.0);
    Tensor l_h = Tensor::scalar(0.0);

    if (cfg.method != Method::SourceOnly) {
        std::vector<DomainGroup> groups;
        for (std::size_t p = 0; p < pools.size(); ++p) {
            DomainGroup group;
            group.g = take_rows(out.fw.g, batch.offsets[p], batch.counts[p]);
            group.domain_id = pools[p].domain_id;
            if (cfg.model.entropy_conditioning) group.weights = entropy_weights(group.g);
            groups.push_back(std::move(group));
        }
        l_trans = transfer_loss(model, groups, lambda,
                                cfg.model.discriminator_raw_logits ? DiscriminatorInput::RawLogits
                                                                   : DiscriminatorInput::Softmax);
        if (cfg.method == Method::Hdan)
            l_h = heuristic_loss(out.fw.h_total, cfg.model.heuristic_loss_norm);
    }

    out.bundle = total_loss(std::move(l_cls), std::move(l_trans), std::move(l_h), cfg.model.mu);
    out.objective = out.bundle.l_f;
    if (cfg.model.independence_loss && cfg.method == Method::Hdan)
        out.objective = add(out.objective, independence_gap_loss(out.fw.f, out.fw.g));
    return out;
}

double slice_l1_mean(const Tensor& t, int offset, int count) {
    const int d = t.cols();
    const auto& v = t.values();
    double acc = 0.0;
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < d; ++j) acc += std::fabs(v[static_cast<std::size_t>(offset + i) * d + j]);
    return acc / (static_cast<double>(count) * d);
}

struct EvalContext {
    StepBatch full;                 // every row of every pool
    std::vector<int> probe_labels;  // physical domain per row
    std::vector<int> probe_rows;    // subsample handed to the probes
    std::uint64_t probe_seed = 0;
    int target_pool = 0;            // index of the unlabeled target pool
};

// Rows handed to the per-epoch domain probes; keeps the probe recipe
// affordable at one retrain per epoch without visibly coarsening Fig-3-style
// accuracy curves.
constexpr int kProbeMaxRows = 320;

MetricsRecord eval_epoch(const HdanModel& model, const ExperimentConfig& cfg,
                         const std::vector<Pool>& pools, const Task& task,
                         const EvalContext& ctx, int epoch, double lambda,
                         double* decomp_residual, double* h_range_target) {
    MetricsRecord rec;
    rec.epoch = epoch;

    StepLosses losses = compute_losses(model, cfg, pools, ctx.full, lambda);
    rec.l_cls = losses.bundle.l_cls.item();
    rec.l_trans = losses.bundle.l_trans.item();
    rec.l_h = losses.bundle.l_h.item();
    *decomp_residual = std::max(*decomp_residual, max_decomposition_residual(losses.fw));
    *h_range_target = slice_l1_mean(losses.fw.h_total, ctx.full.offsets[ctx.target_pool],
                                    ctx.full.counts[ctx.target_pool]);

    rec.cos_gh = batch_cosine(losses.fw.g, losses.fw.h_total);
    // Collapsed logits carry no shape information; report 0 rather than abort.
    try {
        rec.kurt_f = kurtosis(losses.fw.f);
        rec.kurt_g = kurtosis(losses.fw.g);
        rec.kurt_gap = rec.kurt_f - rec.kurt_g;
    } catch (const std::invalid_argument&) {
        rec.kurt_f = rec.kurt_g = rec.kurt_gap = 0.0;
    }

    const HeadDiagnostics heads = head_diagnostics(losses.fw);
    rec.h_part_ranges = heads.ranges;
    rec.head_pair_cos = heads.mean_offdiag();

    auto probe_on = [&](const Tensor& reps) {
        const int d = reps.cols();
        const auto& src = reps.values();
        const int n = static_cast<int>(ctx.probe_rows.size());
        std::vector<double> xs(static_cast<std::size_t>(n) * d);
        std::vector<int> ys(n);
        for (int r = 0; r < n; ++r) {
            const int row = ctx.probe_rows[r];
            for (int j = 0; j < d; ++j)
                xs[static_cast<std::size_t>(r) * d + j] = src[static_cast<std::size_t>(row) * d + j];
            ys[r] = ctx.probe_labels[row];
        }
        return domain_probe(Tensor({n, d}, std::move(xs)), ys, ctx.probe_seed);
    };
    rec.probe_acc_g = probe_on(losses.fw.g);
    rec.probe_acc_h = probe_on(losses.fw.h_total);
    rec.target_acc = target_accuracy(model, task.target_eval);
    return rec;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records,
                       int num_heads) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("run: cannot write " + path.string());
    out << "epoch,l_cls,l_trans,l_h,cos_gh,kurt_f,kurt_g,kurt_gap";
    for (int k = 1; k <= num_heads; ++k) out << ",h_range_" << k;
    out << ",head_pair_cos,probe_acc_g,probe_acc_h,target_acc\n";
    for (const auto& r : records) {
        out << r.epoch << "," << fmt17(r.l_cls) << "," << fmt17(r.l_trans) << "," << fmt17(r.l_h)
            << "," << fmt17(r.cos_gh) << "," << fmt17(r.kurt_f) << "," << fmt17(r.kurt_g) << ","
            << fmt17(r.kurt_gap);
        for (int k = 0; k < num_heads; ++k) out << "," << fmt17(r.h_part_ranges[k]);
        out << "," << fmt17(r.head_pair_cos) << "," << fmt17(r.probe_acc_g) << ","
            << fmt17(r.probe_acc_h) << "," << fmt17(r.target_acc) << "\n";
    }
    if (!out) throw std::runtime_error("run: write failed for " + path.string());
}

nlohmann::json record_to_json(const MetricsRecord& r) {
    nlohmann::json j;
    j["epoch"] = r.epoch;
    j["l_cls"] = r.l_cls;
    j["l_trans"] = r.l_trans;
    j["l_h"] = r.l_h;
    j["cos_gh"] = r.cos_gh;
    j["kurt_f"] = r.kurt_f;
    j["kurt_g"] = r.kurt_g;
    j["kurt_gap"] = r.kurt_gap;
    j["h_part_ranges"] = r.h_part_ranges;
    j["head_pair_cos"] = r.head_pair_cos;
    j["probe_acc_g"] = r.probe_acc_g;
    j["probe_acc_h"] = r.probe_acc_h;
    j["target_acc"] = r.target_acc;
    return j;
}

void write_summary_json(const std::filesystem::path& path, const RunSummary& summary,
                        const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["status"] = summary.status;
    j["final_target_acc"] = summary.final_target_acc;
    j["best_target_acc"] = summary.best_target_acc;
    j["final_metrics"] = record_to_json(summary.final_metrics);
    j["epochs_completed"] = summary.epochs_completed;
    j["max_decomp_residual"] = summary.max_decomp_residual;
    j["cos_gh_epoch0"] = summary.cos_gh_epoch0;
    j["h_range_target_epoch0"] = summary.h_range_target_epoch0;
    j["h_range_target_final"] = summary.h_range_target_final;
    j["wall_clock_seconds"] = summary.wall_seconds;
    j["code_version"] = kVersion;
    j["config"] = nlohmann::json::parse(config_to_json(cfg));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("run: cannot write " + path.string());
    out << j.dump(2) << "\n";
}

void train(const ExperimentConfig& cfg, RunSummary& summary) {
    // Data depend on (task seed, run seed) but never on the method, so the
    // baselines see the identical stream under the same seed.
    TaskSpec spec = cfg.task;
    spec.seed = splitmix64(spec.seed + splitmix64(cfg.seed));
    const Task task = make_task(spec);

    Rng run_rng(cfg.seed);

    std::vector<Pool> pools;
    for (const auto& src : task.sources)
        pools.push_back({&src, src.domain_id, src.domain_id, true, {}, 0, Rng(0)});
    const int target_probe_id = static_cast<int>(task.sources.size());
    if (task.target_labeled)
        pools.push_back({&*task.target_labeled, task.target_labeled->domain_id, target_probe_id,
                         true, {}, 0, Rng(0)});
    const int target_pool_index = static_cast<int>(pools.size());
    pools.push_back({&task.target_unlabeled, task.target_unlabeled.domain_id, target_probe_id,
                     false, {}, 0, Rng(0)});
    for (std::size_t p = 0; p < pools.size(); ++p) pools[p].reset(run_rng.fork(10 + p));

    const int num_domains = static_cast<int>(pools.size());
    HdanModel model = build_model(task.dim, cfg.model.hidden, task.num_classes,
                                  std::max(1, cfg.model.num_heads), num_domains,
                                  run_rng.fork(1).seed());
    if (cfg.method == Method::DannBaseline) model.heuristic_heads.clear();

    EvalContext ctx;
    {
        std::vector<std::vector<int>> all_rows;
        for (auto& pool : pools) {
            std::vector<int> rows(pool.ds->n());
            std::iota(rows.begin(), rows.end(), 0);
            all_rows.push_back(std::move(rows));
        }
        ctx.full = gather_batch(pools, all_rows);
        for (std::size_t p = 0; p < pools.size(); ++p)
            ctx.probe_labels.insert(ctx.probe_labels.end(), pools[p].ds->n(), pools[p].probe_domain);
        ctx.probe_seed = run_rng.fork(2).seed();
        ctx.target_pool = target_pool_index;
        std::vector<int> rows(ctx.probe_labels.size());
        std::iota(rows.begin(), rows.end(), 0);
        Rng probe_rng = run_rng.fork(3);
        probe_rng.shuffle(rows);
        rows.resize(std::min<std::size_t>(rows.size(), kProbeMaxRows));
        std::sort(rows.begin(), rows.end());
        ctx.probe_rows = std::move(rows);
    }

    const int sub_batch = std::max(1, cfg.optim.batch_size / num_domains);
    const int steps_per_epoch = std::max(1, task.sources[0].n() / sub_batch);
    const long total_steps = static_cast<long>(cfg.optim.epochs) * steps_per_epoch;

    SgdState opt;
    opt.lr = cfg.optim.lr;
    opt.momentum = cfg.optim.momentum;
    opt.weight_decay = cfg.optim.weight_decay;
    // Without a transfer loss the discriminator receives no gradient.
    auto params = cfg.method == Method::SourceOnly
                      ? [&] {
                            std::vector<Tensor*> ps = model.encoder.parameters();
                            auto add_all = [&ps](std::vector<Tensor*> more) {
                                ps.insert(ps.end(), more.begin(), more.end());
                            };
                            add_all(model.fundament_head.parameters());
                            for (auto& head : model.heuristic_heads) add_all(head.parameters());
                            return ps;
                        }()
                      : model.parameters();

    auto record_epoch = [&](int epoch, double lambda) {
        double h_range = 0.0;
        MetricsRecord rec = eval_epoch(model, cfg, pools, task, ctx, epoch, lambda,
                                       &summary.max_decomp_residual, &h_range);
        if (epoch == 0) {
            summary.cos_gh_epoch0 = rec.cos_gh;
            summary.h_range_target_epoch0 = h_range;
        }
        summary.h_range_target_final = h_range;
        summary.best_target_acc = std::max(summary.best_target_acc, rec.target_acc);
        summary.history.push_back(std::move(rec));
    };

    record_epoch(0, lambda_schedule(0.0, cfg.optim.gamma));
    if (cfg.eval_only) return;

    long completed = 0;
    for (int epoch = 1; epoch <= cfg.optim.epochs; ++epoch) {
        for (int step = 0; step < steps_per_epoch; ++step) {
            const double progress = static_cast<double>(completed) / static_cast<double>(total_steps);
            const double lambda = lambda_schedule(progress, cfg.optim.gamma);

            std::vector<std::vector<int>> rows;
            for (auto& pool : pools) rows.push_back(pool.next(sub_batch));
            const StepBatch batch = gather_batch(pools, rows);

            StepLosses losses = compute_losses(model, cfg, pools, batch, lambda);
            summary.max_decomp_residual =
                std::max(summary.max_decomp_residual, max_decomposition_residual(losses.fw));

            const double objective = losses.objective.item();
            if (!std::isfinite(objective)) {
                summary.status = "non_finite_loss_at_epoch_" + std::to_string(epoch);
                summary.epochs_completed = epoch - 1;
                return;
            }
            backward(losses.objective);
            sgd_step(params, opt);
            model.zero_grad();
            ++completed;
        }
        const double lambda = lambda_schedule(static_cast<double>(completed) / total_steps,
                                              cfg.optim.gamma);
        record_epoch(epoch, lambda);
        summary.epochs_completed = epoch;
    }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    RunSummary summary;
    summary.output_dir = cfg.resolved_output_dir();
    std::error_code ec;
    std::filesystem::create_directories(summary.output_dir, ec);
    if (ec) throw std::runtime_error("run: cannot create " + summary.output_dir.string() + ": " +
                                     ec.message());

    const auto t0 = std::chrono::steady_clock::now();
    try {
        train(cfg, summary);
    } catch (const std::exception& e) {
        summary.status = std::string("failed: ") + e.what();
    }
    summary.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    if (!summary.history.empty()) {
        summary.final_metrics = summary.history.back();
        summary.final_target_acc = summary.final_metrics.target_acc;
    }
    const int heads = summary.history.empty()
                          ? 0
                          : static_cast<int>(summary.history.front().h_part_ranges.size());
    write_metrics_csv(summary.output_dir / "metrics.csv", summary.history, heads);
    write_summary_json(summary.output_dir / "summary.json", summary, cfg);
    return summary;
}

std::vector<SweepRow> sweep_m(const ExperimentConfig& cfg, const std::vector<int>& m_values) {
    if (m_values.empty()) throw std::invalid_argument("sweep: m_values must be nonempty");
    const std::filesystem::path root = cfg.resolved_output_dir();
    std::vector<SweepRow> rows;
    for (int m : m_values) {
        if (m < 1) throw std::invalid_argument("sweep: M must be >= 1, got " + std::to_string(m));
        std::vector<double> accs;
        for (int s = 0; s < 3; ++s) {
            ExperimentConfig run_cfg = cfg;
            run_cfg.model.num_heads = m;
            run_cfg.seed = cfg.seed + static_cast<std::uint64_t>(s);
            run_cfg.output_dir =
                (root / ("m" + std::to_string(m) + "_seed" + std::to_string(run_cfg.seed))).string();
            const RunSummary summary = run_experiment(run_cfg);
            if (summary.status != "ok")
                throw std::runtime_error("sweep: run m=" + std::to_string(m) + " seed=" +
                                         std::to_string(run_cfg.seed) + " failed: " + summary.status);
            accs.push_back(summary.final_target_acc);
        }
        SweepRow row;
        row.m = m;
        row.mean_target_acc = std::accumulate(accs.begin(), accs.end(), 0.0) / accs.size();
        double var = 0.0;
        for (double a : accs) var += (a - row.mean_target_acc) * (a - row.mean_target_acc);
        row.std_target_acc = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
        rows.push_back(row);
    }

    std::filesystem::create_directories(root);
    std::ofstream out(root / "sweep.csv");
    if (!out) throw std::runtime_error("sweep: cannot write " + (root / "sweep.csv").string());
    out << "m,mean_target_acc,std_target_acc\n";
    for (const auto& r : rows)
        out << r.m << "," << fmt17(r.mean_target_acc) << "," << fmt17(r.std_target_acc) << "\n";
    return rows;
}

GradCheckResult full_graph_gradient_check(std::uint64_t seed) {
    Rng rng(seed);
    const int d_in = 2 + static_cast<int>(rng.below(4));
    const int hidden = 3 + static_cast<int>(rng.below(5));
    const int classes = 2 + static_cast<int>(rng.below(3));
    const int heads = 1 + static_cast<int>(rng.below(3));
    const int domains = 2 + static_cast<int>(rng.below(2));
    const int rows_per_domain = 3 + static_cast<int>(rng.below(3));
    const double lambda = 0.25 + rng.uniform();
    const double mu = 1.0;

    HdanModel model = build_model(d_in, hidden, classes, heads, domains, rng.fork(1).seed());

    const int n = rows_per_domain * domains;
    std::vector<double> xs(static_cast<std::size_t>(n) * d_in);
    for (double& v : xs) v = rng.normal();
    const Tensor x({n, d_in}, std::move(xs));
    std::vector<int> labels(rows_per_domain);
    for (int& y : labels) y = static_cast<int>(rng.below(classes));

    struct Parts {
        LossBundle bundle;
    };
    auto parts_fn = [&model, &x, &labels, rows_per_domain, domains, lambda, mu]() {
        ForwardOut fw = forward(model, x);
        Tensor l_cls = classification_loss(take_rows(fw.g, 0, rows_per_domain), labels);
        std::vector<DomainGroup> groups;
        for (int dom = 0; dom < domains; ++dom)
            groups.push_back({take_rows(fw.g, dom * rows_per_domain, rows_per_domain), dom, {}});
        Tensor l_trans = transfer_loss(model, groups, lambda);
        Tensor l_h = heuristic_loss(fw.h_total);
        return Parts{total_loss(std::move(l_cls), std::move(l_trans), std::move(l_h), mu)};
    };

    auto params = model.parameters();
    for (Tensor* p : params) p->zero_grad();
    backward(parts_fn().bundle.l_f);
    std::vector<std::vector<double>> analytic;
    for (Tensor* p : params)
        analytic.push_back(p->has_grad() ? p->grad() : std::vector<double>(p->size(), 0.0));

    std::unordered_set<const detail::Node*> disc_params;
    for (Tensor* p : model.discriminator.parameters()) disc_params.insert(p->node().get());

    // The transfer path crosses the gradient-reversal layer for every
    // parameter except the discriminator's, so the finite-difference oracle
    // for those parameters is d(l_cls + mu*l_h)/dp - lambda * d(l_trans)/dp;
    // the discriminator sees plain +d(l_trans)/dp.
    const double step = 1e-5;
    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const double trans_sign = disc_params.count(params[pi]->node().get()) ? 1.0 : -lambda;
        auto& w = params[pi]->values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double saved = w[i];
            w[i] = saved + step;
            Parts up = parts_fn();
            w[i] = saved - step;
            Parts down = parts_fn();
            w[i] = saved;
            const double fd_cls_h = ((up.bundle.l_cls.item() + mu * up.bundle.l_h.item()) -
                                     (down.bundle.l_cls.item() + mu * down.bundle.l_h.item())) /
                                    (2.0 * step);
            const double fd_trans =
                (up.bundle.l_trans.item() - down.bundle.l_trans.item()) / (2.0 * step);
            const double numeric = fd_cls_h + trans_sign * fd_trans;
            const double a = analytic[pi][i];
            const double rel =
                std::fabs(a - numeric) / std::max({std::fabs(a), std::fabs(numeric), 1e-6});
            result.max_rel_err = std::max(result.max_rel_err, rel);
            ++result.checked;
        }
    }
    for (Tensor* p : params) p->zero_grad();
    return result;
}

namespace {

int run_selfcheck_group(std::ostream& out, const char* name, bool ok, const std::string& detail) {
    out << (ok ? "[ok]   " : "[FAIL] ") << name;
    if (!detail.empty()) out << " (" << detail << ")";
    out << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int selfcheck(std::ostream& out) {
    int failures = 0;
    int checks = 0;

    // Gradient integrity of the primitive set under a generic weighted-sum loss.
    {
        Rng rng(7);
        auto rand_tensor = [&rng](std::vector<int> shape, double lo, double hi, bool grad) {
            std::size_t n = 1;
            for (int d : shape) n *= static_cast<std::size_t>(d);
            std::vector<double> v(n);
            for (double& x : v) x = rng.uniform(lo, hi);
            return Tensor(std::move(shape), std::move(v), grad);
        };
        struct PrimCase {
            const char* name;
            std::function<double()> run;  // returns max rel err
        };
        Tensor a = rand_tensor({3, 4}, -1.5, 1.5, true);
        Tensor b = rand_tensor({3, 4}, -1.5, 1.5, true);
        Tensor pos = rand_tensor({3, 4}, 0.3, 2.0, true);
        Tensor away = rand_tensor({3, 4}, 0.2, 1.8, true);  // away from relu/abs kinks
        Tensor v = rand_tensor({4}, -1.0, 1.0, true);
        Tensor m1 = rand_tensor({3, 4}, -1.0, 1.0, true);
        Tensor m2 = rand_tensor({4, 2}, -1.0, 1.0, true);
        Tensor coeff = rand_tensor({3, 4}, -1.0, 1.0, false);
        Tensor coeff2 = rand_tensor({3, 2}, -1.0, 1.0, false);
        Tensor coeffv = rand_tensor({4}, -1.0, 1.0, false);
        std::vector<int> labels = {1, 0, 2, 1};
        Tensor logits = rand_tensor({4, 3}, -2.0, 2.0, true);
        Tensor coeff3 = rand_tensor({4, 3}, -1.0, 1.0, false);

        auto weighted = [](const Tensor& t, const Tensor& c) { return sum(mul(t, c)); };
        std::vector<PrimCase> cases = {
            {"matmul", [&] { return gradient_check([&] { return weighted(matmul(m1, m2), coeff2); }, {&m1, &m2}).max_rel_err; }},
            {"add", [&] { return gradient_check([&] { return weighted(add(a, b), coeff); }, {&a, &b}).max_rel_err; }},
            {"sub", [&] { return gradient_check([&] { return weighted(sub(a, b), coeff); }, {&a, &b}).max_rel_err; }},
            {"mul", [&] { return gradient_check([&] { return weighted(mul(a, b), coeff); }, {&a, &b}).max_rel_err; }},
            {"relu", [&] { return gradient_check([&] { return weighted(relu(away), coeff); }, {&away}).max_rel_err; }},
            {"tanh", [&] { return gradient_check([&] { return weighted(tanh(a), coeff); }, {&a}).max_rel_err; }},
            {"exp", [&] { return gradient_check([&] { return weighted(exp(a), coeff); }, {&a}).max_rel_err; }},
            {"log", [&] { return gradient_check([&] { return weighted(log(pos), coeff); }, {&pos}).max_rel_err; }},
            {"abs", [&] { return gradient_check([&] { return weighted(abs(away), coeff); }, {&away}).max_rel_err; }},
            {"scale", [&] { return gradient_check([&] { return weighted(scale(a, -1.7), coeff); }, {&a}).max_rel_err; }},
            {"pow_const", [&] { return gradient_check([&] { return weighted(pow_const(pos, -0.5), coeff); }, {&pos}).max_rel_err; }},
            {"add_rowvec", [&] { return gradient_check([&] { return weighted(add_rowvec(a, v), coeff); }, {&a, &v}).max_rel_err; }},
            {"sub_rowvec", [&] { return gradient_check([&] { return weighted(sub_rowvec(a, v), coeff); }, {&a, &v}).max_rel_err; }},
            {"mul_rowvec", [&] { return gradient_check([&] { return weighted(mul_rowvec(a, v), coeff); }, {&a, &v}).max_rel_err; }},
            {"col_mean", [&] { return gradient_check([&] { return weighted(col_mean(a), coeffv); }, {&a}).max_rel_err; }},
            {"take_rows", [&] { return gradient_check([&] { return sum(take_rows(a, 1, 2)); }, {&a}).max_rel_err; }},
            {"sum", [&] { return gradient_check([&] { return sum(a); }, {&a}).max_rel_err; }},
            {"mean", [&] { return gradient_check([&] { return mean(a); }, {&a}).max_rel_err; }},
            {"l1_mean", [&] { return gradient_check([&] { return l1_mean(away); }, {&away}).max_rel_err; }},
            {"softmax_rows", [&] { return gradient_check([&] { return weighted(softmax_rows(logits), coeff3); }, {&logits}).max_rel_err; }},
            {"softmax_cross_entropy", [&] { return gradient_check([&] { return softmax_cross_entropy(logits, labels, {0.5, 1.5, 1.0, 2.0}); }, {&logits}).max_rel_err; }},
            // grad_reverse's backward is -lambda times the derivative of its
            // (identity) forward, so the oracle is -lambda * fd.
            {"grad_reverse", [&] {
                 const double lambda = 0.8;
                 a.zero_grad();
                 backward(weighted(grad_reverse(a, lambda), coeff));
                 double worst = 0.0;
                 for (std::size_t i = 0; i < a.size(); ++i) {
                     const double expected = -lambda * coeff.values()[i];
                     const double got = a.grad()[i];
                     worst = std::max(worst, std::fabs(got - expected) /
                                                 std::max({std::fabs(got), std::fabs(expected), 1e-6}));
                 }
                 a.zero_grad();
                 return worst;
             }},
        };
        double worst = 0.0;
        std::string worst_name;
        for (auto& c : cases) {
            const double err = c.run();
            if (err > worst) {
                worst = err;
                worst_name = c.name;
            }
        }
        ++checks;
        failures += run_selfcheck_group(out, "primitive gradients", worst < 1e-6,
                                        "max rel err " + fmt17(worst) + " at " + worst_name);
    }

    {
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 5; ++seed)
            worst = std::max(worst, full_graph_gradient_check(seed).max_rel_err);
        ++checks;
        failures += run_selfcheck_group(out, "full loss-graph gradients", worst < 1e-4,
                                        "max rel err " + fmt17(worst));
    }

    {
        Rng rng(11);
        double worst_identity = 0.0, worst_risk = 0.0;
        for (int trial = 0; trial < 1000; ++trial) {
            const int n = 2 + static_cast<int>(rng.below(6));
            const int d = 1 + static_cast<int>(rng.below(4));
            std::vector<double> fv(static_cast<std::size_t>(n) * d), sv(fv.size());
            for (double& x : fv) x = rng.uniform(-2.0, 2.0);
            for (double& x : sv) x = rng.uniform(-2.0, 2.0);
            const double k = 1.0 - rng.uniform() * 0.999;
            const BoundReport report =
                bound_identity_check(Tensor({n, d}, fv), Tensor({n, d}, sv), k);
            worst_identity = std::max(worst_identity, report.max_identity_residual);
            worst_risk = std::max(worst_risk, report.risk_residual);
        }
        ++checks;
        failures += run_selfcheck_group(out, "bound algebra (1000 triples)",
                                        worst_identity < 1e-12 && worst_risk < 1e-12,
                                        "identity " + fmt17(worst_identity) + ", risk " +
                                            fmt17(worst_risk));
    }

    {
        const int n = 100000;
        std::vector<double> rade(n);
        for (int i = 0; i < n; ++i) rade[i] = (i % 2 == 0) ? 1.0 : -1.0;
        const double k_rade = kurtosis(Tensor({n, 1}, std::move(rade)));

        Rng rng(13);
        std::vector<double> normal(n), uniform(n);
        for (double& x : normal) x = rng.normal();
        for (double& x : uniform) x = rng.uniform();
        const double k_norm = kurtosis(Tensor({n, 1}, std::move(normal)));
        const double k_unif = kurtosis(Tensor({n, 1}, std::move(uniform)));

        const bool ok = std::fabs(k_rade + 2.0) < 1e-9 && std::fabs(k_norm) < 0.05 &&
                        std::fabs(k_unif + 1.2) < 0.05;
        ++checks;
        failures += run_selfcheck_group(out, "kurtosis closed forms", ok,
                                        "rademacher " + fmt17(k_rade) + ", normal " + fmt17(k_norm) +
                                            ", uniform " + fmt17(k_unif));
    }

    out << "selfcheck: " << (checks - failures) << "/" << checks << " groups passed\n";
    return failures;
}

int cli(int argc, const char* const* argv) {
    CLI::App app{"heuristic domain adaptation experiments"};
    app.require_subcommand(1);

    std::string config_path, method_override, spec_path, metrics_path, out_dir, m_list;
    std::int64_t seed_override = -1;

    auto* run_cmd = app.add_subcommand("run", "train one experiment");
    run_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    run_cmd->add_option("--seed", seed_override, "override config seed");
    run_cmd->add_option("--method", method_override, "hdan|source_only|dann_baseline");
    run_cmd->add_option("--out", out_dir, "override output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "sweep the heuristic ensemble size");
    sweep_cmd->add_option("--config", config_path, "experiment config JSON")->required();
    sweep_cmd->add_option("--m", m_list, "comma-separated ensemble sizes, e.g. 1,2,3")->required();

    auto* gen_cmd = app.add_subcommand("gen-data", "generate task datasets as CSV");
    gen_cmd->add_option("--spec", spec_path, "task spec JSON")->required();
    gen_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* plot_cmd = app.add_subcommand("plot", "render metrics.csv as SVG charts");
    plot_cmd->add_option("--metrics", metrics_path, "metrics.csv path")->required();
    plot_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* check_cmd = app.add_subcommand("selfcheck", "gradient, bound and kurtosis checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (run_cmd->parsed()) {
            ExperimentConfig cfg = load_config(config_path);
            if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
            if (!method_override.empty()) {
                ExperimentConfig probe = parse_config("{\"method\": \"" + method_override + "\"}");
                cfg.method = probe.method;
            }
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            const RunSummary summary = run_experiment(cfg);
            std::printf("status=%s final_target_acc=%.4f best_target_acc=%.4f epochs=%d out=%s\n",
                        summary.status.c_str(), summary.final_target_acc, summary.best_target_acc,
                        summary.epochs_completed, summary.output_dir.string().c_str());
            return summary.status == "ok" ? 0 : 2;
        }
        if (sweep_cmd->parsed()) {
            ExperimentConfig cfg = load_config(config_path);
            std::vector<int> ms;
            std::stringstream ss(m_list);
            std::string tok;
            while (std::getline(ss, tok, ',')) ms.push_back(std::stoi(tok));
            const auto rows = sweep_m(cfg, ms);
            for (const auto& r : rows)
                std::printf("M=%d mean=%.4f std=%.4f\n", r.m, r.mean_target_acc, r.std_target_acc);
            return 0;
        }
        if (gen_cmd->parsed()) {
            std::ifstream in(spec_path);
            if (!in) throw std::invalid_argument("gen-data: cannot open " + spec_path);
            std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            const Task task = make_task(parse_task_spec(text));
            std::filesystem::create_directories(out_dir);
            const std::filesystem::path root = out_dir;
            for (const auto& src : task.sources) export_csv(src, root / (src.name + ".csv"));
            export_csv(task.target_unlabeled, root / "target_unlabeled.csv");
            if (task.target_labeled) export_csv(*task.target_labeled, root / "target_labeled.csv");
            export_csv(task.target_eval, root / "target_eval.csv");
            std::printf("wrote %zu datasets to %s\n", task.sources.size() + 2 + (task.target_labeled ? 1 : 0),
                        out_dir.c_str());
            return 0;
        }
        if (plot_cmd->parsed()) {
            const auto written = plot_metrics(metrics_path, out_dir);
            std::printf("wrote %zu charts to %s\n", written.size(), out_dir.c_str());
            return 0;
        }
        if (check_cmd->parsed()) {
            return selfcheck(std::cout) == 0 ? 0 : 3;
        }
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

}  // namespace hda
