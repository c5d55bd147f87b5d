#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hda/data.hpp"
#include "hda/diagnostics.hpp"
#include "hda/hdan.hpp"

namespace hda {

inline constexpr const char* kVersion = "0.1.0";

enum class Method { Hdan, SourceOnly, DannBaseline };

struct ModelConfig {
    int hidden = 32;
    int num_heads = 3;  // M
    double mu = 1.0;
    bool entropy_conditioning = false;
    bool independence_loss = false;
    bool discriminator_raw_logits = false;
    HeuristicNorm heuristic_loss_norm = HeuristicNorm::L1;
};

struct OptimConfig {
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int epochs = 100;
    int batch_size = 64;
    double gamma = 10.0;
};

struct ExperimentConfig {
    TaskSpec task;
    ModelConfig model;
    OptimConfig optim;
    std::uint64_t seed = 0;
    std::string output_dir;  // empty: $HDA_OUT_DIR if set, else "out"
    Method method = Method::Hdan;
    bool eval_only = false;

    void validate() const;
    std::filesystem::path resolved_output_dir() const;
};

// JSON round trip; parsing rejects unknown keys.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const ExperimentConfig& cfg);

TaskSpec parse_task_spec(const std::string& json_text);
std::string task_spec_to_json(const TaskSpec& spec);

// Pinned default experiments; "default" is the blobs UDA task the acceptance
// margins were calibrated on.
ExperimentConfig builtin_config(const std::string& name);
std::vector<std::string> builtin_config_names();

struct RunSummary {
    std::string status = "ok";  // anything else records a failure
    double final_target_acc = 0.0;
    double best_target_acc = 0.0;
    MetricsRecord final_metrics;
    double wall_seconds = 0.0;
    int epochs_completed = 0;
    double max_decomp_residual = 0.0;   // max |g + h - f| seen at any step
    double cos_gh_epoch0 = 0.0;
    double h_range_target_epoch0 = 0.0; // mean |H(x)| over target rows
    double h_range_target_final = 0.0;
    std::vector<MetricsRecord> history;
    std::filesystem::path output_dir;
};

// Trains per the config and writes metrics.csv + summary.json into the run's
// output directory. summary.json is written even when the run fails early.
RunSummary run_experiment(const ExperimentConfig& cfg);

struct SweepRow {
    int m = 0;
    double mean_target_acc = 0.0;
    double std_target_acc = 0.0;
};

// Three seeds per ensemble size; writes sweep.csv under the output dir.
std::vector<SweepRow> sweep_m(const ExperimentConfig& cfg, const std::vector<int>& m_values);

// Reads a metrics.csv and writes one standalone SVG per diagnostic family.
// Returns the written file paths.
std::vector<std::filesystem::path> plot_metrics(const std::filesystem::path& metrics_csv,
                                                const std::filesystem::path& out_dir);

// Gradient integrity over a full training loss graph on a small random model;
// exercised by selfcheck and the acceptance suite.
GradCheckResult full_graph_gradient_check(std::uint64_t seed);

// Gradient checks, bound identities and kurtosis closed forms. Returns the
// number of failed checks and prints a per-group report.
int selfcheck(std::ostream& out);

// run | sweep | gen-data | plot | selfcheck.
// Exit codes: 0 success, 1 usage error, 2 runtime failure, 3 selfcheck failure.
int cli(int argc, const char* const* argv);

}  // namespace hda
