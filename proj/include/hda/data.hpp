#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hda/tensor.hpp"

namespace hda {

struct DomainDataset {
    Tensor x;            // [n x d], never requires grad
    std::vector<int> y;  // empty when unlabeled
    int domain_id = 0;
    std::string name;

    int n() const { return x.defined() ? x.rows() : 0; }
    int dim() const { return x.defined() ? x.cols() : 0; }
    bool labeled() const { return !y.empty(); }
};

enum class TaskMode { Uda, Msda, Ssda };
enum class GeneratorKind { Moons, Blobs };

struct TaskSpec {
    TaskMode mode = TaskMode::Uda;
    GeneratorKind generator = GeneratorKind::Blobs;
    int num_sources = 1;  // msda only
    int shots = 0;        // ssda only, 1 or 3
    int n_per_domain = 500;
    double noise_std = 0.5;
    // moons
    double rotation_deg = 40.0;
    // blobs
    int num_classes = 2;
    int d_signal = 2;
    int d_nuisance = 4;
    double domain_offset = 3.0;
    std::uint64_t seed = 0;

    int input_dim() const;
    int classes() const { return generator == GeneratorKind::Moons ? 2 : num_classes; }
};

struct Task {
    std::vector<DomainDataset> sources;
    DomainDataset target_unlabeled;
    std::optional<DomainDataset> target_labeled;  // ssda only
    DomainDataset target_eval;                    // evaluation-only labels
    int num_classes = 2;
    int dim = 2;

    // Distinct domain ids the discriminator must separate.
    int num_domain_groups() const;
};

// Two interleaved half-moon classes, centered at the origin; the target is
// the same distribution rotated by rotation_deg.
std::pair<DomainDataset, DomainDataset> make_moons_shift(int n_per_domain, double rotation_deg,
                                                         double noise_std, std::uint64_t seed);

// Gaussian classes on a seeded simplex in the signal dims, identical across
// domains; nuisance dims are pure noise plus a per-domain constant offset
// (source 0, target domain_offset).
std::pair<DomainDataset, DomainDataset> make_blobs_nuisance(int n_per_domain, int num_classes,
                                                            int d_signal, int d_nuisance,
                                                            double domain_offset, double noise_std,
                                                            std::uint64_t seed);

Task make_task(const TaskSpec& spec);

// Header x0,...,x{d-1},y,domain; y = -1 when unlabeled; 17 significant digits
// so a round trip is bitwise exact.
void export_csv(const DomainDataset& ds, const std::filesystem::path& path);
DomainDataset import_csv(const std::filesystem::path& path);

}  // namespace hda
