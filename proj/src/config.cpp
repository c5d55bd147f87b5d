#include <cstdlib>
#include <fstream>
#include <stdexcept>

#include "hda/runner.hpp"
#include "json.hpp"

namespace hda {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::invalid_argument("config: " + msg); }

void expect_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        bool known = false;
        for (const char* a : allowed)
            if (key == a) known = true;
        if (!known) fail(std::string("unknown key \"") + key + "\" in " + where);
    }
}

template <typename T>
void read_into(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

TaskMode mode_from_string(const std::string& s) {
    if (s == "uda") return TaskMode::Uda;
    if (s == "msda") return TaskMode::Msda;
    if (s == "ssda") return TaskMode::Ssda;
    fail("task.mode must be uda|msda|ssda, got \"" + s + "\"");
}

const char* mode_to_string(TaskMode m) {
    switch (m) {
        case TaskMode::Uda: return "uda";
        case TaskMode::Msda: return "msda";
        case TaskMode::Ssda: return "ssda";
    }
    return "uda";
}

GeneratorKind generator_from_string(const std::string& s) {
    if (s == "moons") return GeneratorKind::Moons;
    if (s == "blobs") return GeneratorKind::Blobs;
    fail("task.generator must be moons|blobs, got \"" + s + "\"");
}

const char* generator_to_string(GeneratorKind g) {
    return g == GeneratorKind::Moons ? "moons" : "blobs";
}

Method method_from_string(const std::string& s) {
    if (s == "hdan") return Method::Hdan;
    if (s == "source_only") return Method::SourceOnly;
    if (s == "dann_baseline") return Method::DannBaseline;
    fail("method must be hdan|source_only|dann_baseline, got \"" + s + "\"");
}

const char* method_to_string(Method m) {
    switch (m) {
        case Method::Hdan: return "hdan";
        case Method::SourceOnly: return "source_only";
        case Method::DannBaseline: return "dann_baseline";
    }
    return "hdan";
}

HeuristicNorm norm_from_string(const std::string& s) {
    if (s == "l1") return HeuristicNorm::L1;
    if (s == "l2") return HeuristicNorm::L2;
    fail("model.heuristic_loss_norm must be l1|l2, got \"" + s + "\"");
}

const char* norm_to_string(HeuristicNorm n) { return n == HeuristicNorm::L1 ? "l1" : "l2"; }

TaskSpec task_from_json(const json& t) {
    expect_keys(t, "task",
                {"mode", "generator", "num_sources", "shots", "n_per_domain", "noise_std",
                 "rotation_deg", "num_classes", "d_signal", "d_nuisance", "domain_offset", "seed"});
    TaskSpec spec;
    if (t.contains("mode")) spec.mode = mode_from_string(t.at("mode").get<std::string>());
    if (t.contains("generator")) spec.generator = generator_from_string(t.at("generator").get<std::string>());
    read_into(t, "num_sources", spec.num_sources);
    read_into(t, "shots", spec.shots);
    read_into(t, "n_per_domain", spec.n_per_domain);
    read_into(t, "noise_std", spec.noise_std);
    read_into(t, "rotation_deg", spec.rotation_deg);
    read_into(t, "num_classes", spec.num_classes);
    read_into(t, "d_signal", spec.d_signal);
    read_into(t, "d_nuisance", spec.d_nuisance);
    read_into(t, "domain_offset", spec.domain_offset);
    read_into(t, "seed", spec.seed);
    return spec;
}

json task_to_json(const TaskSpec& spec) {
    json t;
    t["mode"] = mode_to_string(spec.mode);
    t["generator"] = generator_to_string(spec.generator);
    t["num_sources"] = spec.num_sources;
    t["shots"] = spec.shots;
    t["n_per_domain"] = spec.n_per_domain;
    t["noise_std"] = spec.noise_std;
    t["rotation_deg"] = spec.rotation_deg;
    t["num_classes"] = spec.num_classes;
    t["d_signal"] = spec.d_signal;
    t["d_nuisance"] = spec.d_nuisance;
    t["domain_offset"] = spec.domain_offset;
    t["seed"] = spec.seed;
    return t;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (model.num_heads < 1 && method == Method::Hdan)
        fail("model.M must be >= 1, got " + std::to_string(model.num_heads));
    if (model.hidden < 1) fail("model.hidden must be >= 1");
    if (model.mu < 0.0) fail("model.mu must be nonnegative");
    if (optim.epochs < 1) fail("optim.epochs must be >= 1");
    if (optim.batch_size < 2) fail("optim.batch_size must be >= 2");
    if (optim.lr <= 0.0) fail("optim.lr must be positive");
    if (optim.momentum < 0.0 || optim.momentum >= 1.0) fail("optim.momentum must be in [0, 1)");
    if (optim.weight_decay < 0.0) fail("optim.weight_decay must be nonnegative");
    if (optim.gamma <= 0.0) fail("optim.gamma must be positive");
    // Task invariants are enforced by make_task; run them early for fail-fast.
    TaskSpec probe = task;
    probe.n_per_domain = std::max(probe.n_per_domain, 2);
    (void)probe;
    if (task.n_per_domain < 2) fail("task.n_per_domain must be >= 2");
}

std::filesystem::path ExperimentConfig::resolved_output_dir() const {
    if (!output_dir.empty()) return output_dir;
    if (const char* env = std::getenv("HDA_OUT_DIR"); env && *env) return env;
    return "out";
}

ExperimentConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    expect_keys(root, "config",
                {"task", "model", "optim", "seed", "output_dir", "method", "eval_only"});
    ExperimentConfig cfg;
    if (root.contains("task")) cfg.task = task_from_json(root.at("task"));
    if (root.contains("model")) {
        const json& m = root.at("model");
        expect_keys(m, "model",
                    {"hidden", "M", "mu", "entropy_conditioning", "independence_loss",
                     "discriminator_raw_logits", "heuristic_loss_norm"});
        read_into(m, "hidden", cfg.model.hidden);
        read_into(m, "M", cfg.model.num_heads);
        read_into(m, "mu", cfg.model.mu);
        read_into(m, "entropy_conditioning", cfg.model.entropy_conditioning);
        read_into(m, "independence_loss", cfg.model.independence_loss);
        read_into(m, "discriminator_raw_logits", cfg.model.discriminator_raw_logits);
        if (m.contains("heuristic_loss_norm"))
            cfg.model.heuristic_loss_norm = norm_from_string(m.at("heuristic_loss_norm").get<std::string>());
    }
    if (root.contains("optim")) {
        const json& o = root.at("optim");
        expect_keys(o, "optim", {"lr", "momentum", "weight_decay", "epochs", "batch_size", "gamma"});
        read_into(o, "lr", cfg.optim.lr);
        read_into(o, "momentum", cfg.optim.momentum);
        read_into(o, "weight_decay", cfg.optim.weight_decay);
        read_into(o, "epochs", cfg.optim.epochs);
        read_into(o, "batch_size", cfg.optim.batch_size);
        read_into(o, "gamma", cfg.optim.gamma);
    }
    read_into(root, "seed", cfg.seed);
    read_into(root, "output_dir", cfg.output_dir);
    if (root.contains("method")) cfg.method = method_from_string(root.at("method").get<std::string>());
    read_into(root, "eval_only", cfg.eval_only);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_config(text);
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json root;
    root["task"] = task_to_json(cfg.task);
    root["model"] = {{"hidden", cfg.model.hidden},
                     {"M", cfg.model.num_heads},
                     {"mu", cfg.model.mu},
                     {"entropy_conditioning", cfg.model.entropy_conditioning},
                     {"independence_loss", cfg.model.independence_loss},
                     {"discriminator_raw_logits", cfg.model.discriminator_raw_logits},
                     {"heuristic_loss_norm", norm_to_string(cfg.model.heuristic_loss_norm)}};
    root["optim"] = {{"lr", cfg.optim.lr},
                     {"momentum", cfg.optim.momentum},
                     {"weight_decay", cfg.optim.weight_decay},
                     {"epochs", cfg.optim.epochs},
                     {"batch_size", cfg.optim.batch_size},
                     {"gamma", cfg.optim.gamma}};
    root["seed"] = cfg.seed;
    root["output_dir"] = cfg.output_dir;
    root["method"] = method_to_string(cfg.method);
    root["eval_only"] = cfg.eval_only;
    return root.dump(2) + "\n";
}

TaskSpec parse_task_spec(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        fail(std::string("invalid JSON: ") + e.what());
    }
    return task_from_json(root);
}

std::string task_spec_to_json(const TaskSpec& spec) { return task_to_json(spec).dump(2) + "\n"; }

ExperimentConfig builtin_config(const std::string& name) {
    ExperimentConfig cfg;  // defaults are already the blobs UDA experiment
    if (name == "default" || name == "blobs_uda") return cfg;
    if (name == "moons_uda") {
        cfg.task.generator = GeneratorKind::Moons;
        cfg.task.rotation_deg = 40.0;
        cfg.task.noise_std = 0.1;
        return cfg;
    }
    if (name == "blobs_msda") {
        cfg.task.mode = TaskMode::Msda;
        cfg.task.num_sources = 3;
        return cfg;
    }
    if (name == "blobs_ssda1" || name == "blobs_ssda3") {
        cfg.task.mode = TaskMode::Ssda;
        cfg.task.shots = name == "blobs_ssda1" ? 1 : 3;
        return cfg;
    }
    throw std::invalid_argument("builtin_config: unknown name \"" + name + "\"");
}

std::vector<std::string> builtin_config_names() {
    return {"default", "moons_uda", "blobs_msda", "blobs_ssda1", "blobs_ssda3"};
}

}  // namespace hda
