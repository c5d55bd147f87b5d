#include "hda/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "hda/rng.hpp"

namespace hda {

namespace {

// Circumradius of the class-mean simplex in the signal dims. Paired with the
// default noise level this keeps the source task learnable while the nuisance
// shift still saturates an unadapted encoder.
constexpr double kClassSep = 1.0;

std::vector<int> balanced_labels(int n, int num_classes) {
    std::vector<int> y(n);
    for (int i = 0; i < n; ++i) y[i] = i % num_classes;
    return y;
}

// C points with pairwise-equal distances, circumradius kClassSep, centered at
// the origin, rotated by a seeded orthonormal frame. Needs C - 1 <= d; when it
// does not fit, falls back to seeded directions of the same radius.
std::vector<std::vector<double>> simplex_means(int num_classes, int d, Rng& rng) {
    std::vector<std::vector<double>> means(num_classes, std::vector<double>(d, 0.0));
    if (num_classes - 1 <= d) {
        // Vertices e_i - 1/C in the hyperplane orthogonal to (1,...,1),
        // expressed in an orthonormal basis of that hyperplane.
        const int c = num_classes;
        std::vector<std::vector<double>> basis;  // c-1 vectors in R^c
        for (int k = 0; k < c - 1; ++k) {
            std::vector<double> v(c, 0.0);
            for (int j = 0; j <= k; ++j) v[j] = 1.0;
            v[k + 1] = -(k + 1.0);
            double norm = 0.0;
            for (double x : v) norm += x * x;
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
            basis.push_back(std::move(v));
        }
        const double radius = kClassSep / std::sqrt(1.0 - 1.0 / c);
        for (int i = 0; i < c; ++i) {
            std::vector<double> u(c, -1.0 / c);
            u[i] += 1.0;
            for (int k = 0; k < c - 1; ++k) {
                double coord = 0.0;
                for (int j = 0; j < c; ++j) coord += u[j] * basis[k][j];
                means[i][k] = radius * coord;
            }
        }
        // Seeded rotation via Gram-Schmidt on a gaussian frame.
        std::vector<std::vector<double>> q(d, std::vector<double>(d));
        for (auto& row : q)
            for (double& x : row) x = rng.normal();
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < i; ++j) {
                double dot = 0.0;
                for (int k = 0; k < d; ++k) dot += q[i][k] * q[j][k];
                for (int k = 0; k < d; ++k) q[i][k] -= dot * q[j][k];
            }
            double norm = 0.0;
            for (int k = 0; k < d; ++k) norm += q[i][k] * q[i][k];
            norm = std::sqrt(std::max(norm, 1e-300));
            for (int k = 0; k < d; ++k) q[i][k] /= norm;
        }
        for (int i = 0; i < c; ++i) {
            std::vector<double> rotated(d, 0.0);
            for (int k = 0; k < d; ++k)
                for (int j = 0; j < d; ++j) rotated[j] += means[i][k] * q[k][j];
            means[i] = std::move(rotated);
        }
    } else {
        for (auto& m : means) {
            double norm = 0.0;
            for (double& x : m) {
                x = rng.normal();
                norm += x * x;
            }
            norm = std::sqrt(std::max(norm, 1e-300));
            for (double& x : m) x *= kClassSep / norm;
        }
    }
    return means;
}

DomainDataset moons_domain(int n, double rotation_deg, double noise_std, Rng rng,
                           int domain_id, std::string name) {
    const int d = 2;
    std::vector<int> y = balanced_labels(n, 2);
    std::vector<double> xs(static_cast<std::size_t>(n) * d);
    const double rot = rotation_deg * M_PI / 180.0;
    const double cr = std::cos(rot), sr = std::sin(rot);
    for (int i = 0; i < n; ++i) {
        const double t = rng.uniform(0.0, M_PI);
        double px, py;
        if (y[i] == 0) {
            px = std::cos(t);
            py = std::sin(t);
        } else {
            px = 1.0 - std::cos(t);
            py = 0.5 - std::sin(t);
        }
        // Center the two arcs on the origin so the shift is a pure rotation.
        px -= 0.5;
        py -= 0.25;
        px += rng.normal(0.0, noise_std);
        py += rng.normal(0.0, noise_std);
        xs[i * 2 + 0] = cr * px - sr * py;
        xs[i * 2 + 1] = sr * px + cr * py;
    }
    DomainDataset ds;
    ds.x = Tensor({n, d}, std::move(xs));
    ds.y = std::move(y);
    ds.domain_id = domain_id;
    ds.name = std::move(name);
    return ds;
}

DomainDataset blobs_domain(const std::vector<std::vector<double>>& means, int n, int d_signal,
                           int d_nuisance, double offset, double noise_std, Rng rng,
                           int domain_id, std::string name) {
    const int num_classes = static_cast<int>(means.size());
    const int d = d_signal + d_nuisance;
    std::vector<int> y = balanced_labels(n, num_classes);
    std::vector<double> xs(static_cast<std::size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < d_signal; ++j)
            xs[i * d + j] = means[y[i]][j] + rng.normal(0.0, noise_std);
        for (int j = 0; j < d_nuisance; ++j)
            xs[i * d + d_signal + j] = offset + rng.normal(0.0, noise_std);
    }
    DomainDataset ds;
    ds.x = Tensor({n, d}, std::move(xs));
    ds.y = std::move(y);
    ds.domain_id = domain_id;
    ds.name = std::move(name);
    return ds;
}

void validate_spec(const TaskSpec& spec) {
    if (spec.n_per_domain < 2)
        throw std::invalid_argument("TaskSpec: n_per_domain must be >= 2, got " +
                                    std::to_string(spec.n_per_domain));
    if (spec.noise_std < 0.0)
        throw std::invalid_argument("TaskSpec: noise_std must be nonnegative");
    if (spec.generator == GeneratorKind::Blobs) {
        if (spec.num_classes < 2)
            throw std::invalid_argument("TaskSpec: num_classes must be >= 2, got " +
                                        std::to_string(spec.num_classes));
        if (spec.d_signal < 1 || spec.d_nuisance < 1)
            throw std::invalid_argument("TaskSpec: d_signal and d_nuisance must be >= 1");
    }
    switch (spec.mode) {
        case TaskMode::Uda:
            if (spec.num_sources != 1)
                throw std::invalid_argument("TaskSpec: uda requires exactly 1 source, got " +
                                            std::to_string(spec.num_sources));
            break;
        case TaskMode::Msda:
            if (spec.num_sources < 1)
                throw std::invalid_argument("TaskSpec: msda requires num_sources >= 1");
            break;
        case TaskMode::Ssda:
            if (spec.num_sources != 1)
                throw std::invalid_argument("TaskSpec: ssda requires exactly 1 source");
            if (spec.shots != 1 && spec.shots != 3)
                throw std::invalid_argument("TaskSpec: ssda shots must be 1 or 3, got " +
                                            std::to_string(spec.shots));
            break;
    }
}

// Sources spread away from the target's shift so msda domains stay distinct:
// source k sits at -k/(2 S) of the main shift, the target at the full shift.
double source_shift_fraction(int k, int num_sources) {
    if (num_sources <= 1) return 0.0;
    return -static_cast<double>(k) / (2.0 * num_sources);
}

DomainDataset make_domain(const TaskSpec& spec, double shift_fraction, Rng rng,
                          int domain_id, std::string name,
                          const std::vector<std::vector<double>>& blob_means) {
    if (spec.generator == GeneratorKind::Moons) {
        return moons_domain(spec.n_per_domain, shift_fraction * spec.rotation_deg, spec.noise_std,
                            rng, domain_id, std::move(name));
    }
    return blobs_domain(blob_means, spec.n_per_domain, spec.d_signal, spec.d_nuisance,
                        shift_fraction * spec.domain_offset, spec.noise_std, rng, domain_id,
                        std::move(name));
}

DomainDataset select_rows(const DomainDataset& ds, const std::vector<int>& rows, bool keep_labels,
                          int domain_id, std::string name) {
    const int d = ds.dim();
    std::vector<double> xs(rows.size() * static_cast<std::size_t>(d));
    std::vector<int> ys;
    const auto& src = ds.x.values();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        for (int j = 0; j < d; ++j) xs[r * d + j] = src[static_cast<std::size_t>(rows[r]) * d + j];
        if (keep_labels) ys.push_back(ds.y[rows[r]]);
    }
    DomainDataset out;
    out.x = Tensor({static_cast<int>(rows.size()), d}, std::move(xs));
    out.y = std::move(ys);
    out.domain_id = domain_id;
    out.name = std::move(name);
    return out;
}

}  // namespace

int TaskSpec::input_dim() const {
    return generator == GeneratorKind::Moons ? 2 : d_signal + d_nuisance;
}

int Task::num_domain_groups() const {
    return static_cast<int>(sources.size()) + 1 + (target_labeled ? 1 : 0);
}

std::pair<DomainDataset, DomainDataset> make_moons_shift(int n_per_domain, double rotation_deg,
                                                         double noise_std, std::uint64_t seed) {
    if (n_per_domain < 2)
        throw std::invalid_argument("make_moons_shift: n_per_domain must be >= 2, got " +
                                    std::to_string(n_per_domain));
    if (noise_std < 0.0) throw std::invalid_argument("make_moons_shift: noise_std must be nonnegative");
    Rng rng(seed);
    DomainDataset src = moons_domain(n_per_domain, 0.0, noise_std, rng.fork(1), 0, "moons_source");
    DomainDataset tgt = moons_domain(n_per_domain, rotation_deg, noise_std, rng.fork(2), 1, "moons_target");
    return {std::move(src), std::move(tgt)};
}

std::pair<DomainDataset, DomainDataset> make_blobs_nuisance(int n_per_domain, int num_classes,
                                                            int d_signal, int d_nuisance,
                                                            double domain_offset, double noise_std,
                                                            std::uint64_t seed) {
    if (n_per_domain < 2)
        throw std::invalid_argument("make_blobs_nuisance: n_per_domain must be >= 2");
    if (num_classes < 2)
        throw std::invalid_argument("make_blobs_nuisance: num_classes must be >= 2, got " +
                                    std::to_string(num_classes));
    if (d_signal < 1 || d_nuisance < 1)
        throw std::invalid_argument("make_blobs_nuisance: d_signal and d_nuisance must be >= 1");
    if (noise_std < 0.0) throw std::invalid_argument("make_blobs_nuisance: noise_std must be nonnegative");
    Rng rng(seed);
    Rng means_rng = rng.fork(0);
    const auto means = simplex_means(num_classes, d_signal, means_rng);
    DomainDataset src = blobs_domain(means, n_per_domain, d_signal, d_nuisance, 0.0, noise_std,
                                     rng.fork(1), 0, "blobs_source");
    DomainDataset tgt = blobs_domain(means, n_per_domain, d_signal, d_nuisance, domain_offset,
                                     noise_std, rng.fork(2), 1, "blobs_target");
    return {std::move(src), std::move(tgt)};
}

Task make_task(const TaskSpec& spec) {
    validate_spec(spec);
    Rng rng(spec.seed);

    std::vector<std::vector<double>> blob_means;
    if (spec.generator == GeneratorKind::Blobs) {
        Rng means_rng = rng.fork(0);
        blob_means = simplex_means(spec.num_classes, spec.d_signal, means_rng);
    }

    Task task;
    task.num_classes = spec.classes();
    task.dim = spec.input_dim();

    const int num_sources = spec.mode == TaskMode::Msda ? spec.num_sources : 1;
    for (int k = 0; k < num_sources; ++k) {
        task.sources.push_back(make_domain(spec, source_shift_fraction(k, num_sources), rng.fork(1 + k),
                                           k, "source_" + std::to_string(k), blob_means));
    }
    const int target_id = num_sources;
    DomainDataset target = make_domain(spec, 1.0, rng.fork(1 + num_sources), target_id, "target",
                                       blob_means);

    if (spec.mode == TaskMode::Ssda) {
        // First `shots` generated points of each class become the labeled
        // pool; it acts as a third domain at the discriminator.
        std::vector<int> labeled_rows, unlabeled_rows;
        std::vector<int> taken(task.num_classes, 0);
        for (int i = 0; i < target.n(); ++i) {
            if (taken[target.y[i]] < spec.shots) {
                ++taken[target.y[i]];
                labeled_rows.push_back(i);
            } else {
                unlabeled_rows.push_back(i);
            }
        }
        for (int c = 0; c < task.num_classes; ++c)
            if (taken[c] < spec.shots)
                throw std::invalid_argument("make_task: class " + std::to_string(c) + " has only " +
                                            std::to_string(taken[c]) + " target samples for " +
                                            std::to_string(spec.shots) + " shots");
        task.target_labeled = select_rows(target, labeled_rows, true, 2, "target_labeled");
        task.target_unlabeled = select_rows(target, unlabeled_rows, false, 1, "target_unlabeled");
        task.target_eval = select_rows(target, unlabeled_rows, true, 1, "target_eval");
    } else {
        task.target_eval = target;
        task.target_eval.name = "target_eval";
        task.target_unlabeled = std::move(target);
        task.target_unlabeled.y.clear();
        task.target_unlabeled.name = "target_unlabeled";
    }
    return task;
}

void export_csv(const DomainDataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("export_csv: cannot open " + path.string());
    const int d = ds.dim();
    for (int j = 0; j < d; ++j) out << "x" << j << ",";
    out << "y,domain\n";
    char buf[40];
    const auto& xs = ds.x.values();
    for (int i = 0; i < ds.n(); ++i) {
        for (int j = 0; j < d; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", xs[static_cast<std::size_t>(i) * d + j]);
            out << buf << ",";
        }
        out << (ds.labeled() ? ds.y[i] : -1) << "," << ds.domain_id << "\n";
    }
    if (!out) throw std::runtime_error("export_csv: write failed for " + path.string());
}

DomainDataset import_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("import_csv: cannot open " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("import_csv: empty file " + path.string());
    int d = 0;
    {
        std::stringstream ss(header);
        std::string col;
        while (std::getline(ss, col, ','))
            if (!col.empty() && col[0] == 'x') ++d;
    }
    if (d == 0) throw std::runtime_error("import_csv: no feature columns in " + path.string());

    std::vector<double> xs;
    std::vector<int> ys;
    int domain_id = 0;
    bool labeled = true;
    std::string line;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        for (int j = 0; j < d; ++j) {
            if (!std::getline(ss, cell, ','))
                throw std::runtime_error("import_csv: truncated row at line " + std::to_string(line_no));
            xs.push_back(std::strtod(cell.c_str(), nullptr));
        }
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("import_csv: missing label at line " + std::to_string(line_no));
        const int y = std::stoi(cell);
        if (y < 0) labeled = false;
        ys.push_back(y);
        if (!std::getline(ss, cell, ','))
            throw std::runtime_error("import_csv: missing domain at line " + std::to_string(line_no));
        domain_id = std::stoi(cell);
    }
    DomainDataset ds;
    const int n = static_cast<int>(ys.size());
    if (n == 0) throw std::runtime_error("import_csv: no rows in " + path.string());
    ds.x = Tensor({n, d}, std::move(xs));
    if (labeled) ds.y = std::move(ys);
    ds.domain_id = domain_id;
    ds.name = path.stem().string();
    return ds;
}

}  // namespace hda
