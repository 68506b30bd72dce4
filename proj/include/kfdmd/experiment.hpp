#pragma once

#include "kfdmd/delay.hpp"
#include "kfdmd/enkf.hpp"
#include "kfdmd/output.hpp"
#include "kfdmd/systems.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace kfdmd {

enum class ExperimentKind { ode_auto, fourier, nonauto_linear, allen_cahn, lemma_sweep };

ExperimentKind parse_experiment(const std::string& name);
std::string experiment_name(ExperimentKind e);

struct FilterSettings {
    FilterKind kind = FilterKind::etkf;
    Index ensemble_size = 50;
    std::optional<Index> delays;  // empty: chosen by select_delay
    Index rank = 3;
    // Prior variances per block of the flattened layout.
    double prior_modes = 1e-2;
    double prior_eigenvalues = 1e-3;
    double prior_amplitudes = 1e-3;
    // Per-step state noise standard deviation per block; used only in
    // non-autonomous runs.
    double q_modes = 0.0;
    double q_eigenvalues = 0.0;
    double q_amplitudes = 0.0;
    std::optional<double> sigma;  // empty: the experiment's noise level
    DelayCriterion selection;
};

struct OdeSettings {
    double mu = -0.01;
    double lambda = -0.5;
    double dt = 1.0;
    Index steps = 200;
    Index train_steps = 100;
    Eigen::Vector2d x0{3.0, 3.0};
};

struct FourierSettings {
    Index nx = 128;
    Index ny = 128;
    double dt = 0.1;
    Index steps = 200;
    double sigma_bg = 1e-3;
    Index compression = 64;
    FourierSystemSpec spec = FourierSystemSpec::reference();
};

struct NonautoSettings {
    NonautoLinearSpec spec;
    double dt = 0.01;
    Index steps = 1000;
    Eigen::Vector2d x0{1.0, 0.0};
    double burn_in = 0.1;
};

struct AllenCahnSettings {
    double theta = 0.1;
    std::string mu = "constant";  // or "sin"
    double mu_value = 1.0;
    Index nx = 20;
    Index ny = 20;
    double dt = 0.05;
    double t_end = 5.0;
    double train_t_end = 2.0;
    std::string lift = "cubic";  // or "identity"
    double edmd_tau = 1e-10;     // EDMD baseline keeps singular values above tau * s_max
};

struct LemmaSettings {
    Index instances = 200;
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::ode_auto;
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out = "results";
    OutputFormat format = OutputFormat::csv;
    bool svg = false;
    double noise_sigma = 0.1;

    FilterSettings filter;
    OdeSettings ode;
    FourierSettings fourier;
    NonautoSettings nonauto;
    AllenCahnSettings allen_cahn;
    LemmaSettings lemma;

    // Full document after defaults were applied. Built by from_json.
    nlohmann::json resolved;

    // Defaults for one experiment as a JSON document.
    static nlohmann::json defaults(ExperimentKind e);
    // Applies `doc` over the defaults of doc["experiment"]. Unknown keys and
    // bad values throw ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& doc);
    static ExperimentConfig from_file(const std::filesystem::path& path);

    // Canonical JSON of everything that affects results (seeds, output
    // directory, format and svg excluded), with sorted keys.
    std::string canonical() const;
    // 16 hex digits of FNV-1a over canonical().
    std::string hash() const;
};

std::uint64_t fnv1a64(const std::string& bytes);

// Metrics of one estimator on one seed. NaN where not applicable.
struct MethodMetrics {
    std::string method;
    double eigenvalue_error = std::numeric_limits<double>::quiet_NaN();
    double reconstruction_rmse = std::numeric_limits<double>::quiet_NaN();
    double prediction_rmse = std::numeric_limits<double>::quiet_NaN();
};

struct NamedTable {
    std::string name;
    Table table;
};

struct SeedResult {
    std::uint64_t seed = 0;
    std::vector<MethodMetrics> methods;
    std::map<std::string, double> scalars;  // experiment-specific numbers
    std::vector<NamedTable> tables;
    std::vector<PlotTrack> tracks;

    const MethodMetrics& method(const std::string& name) const;
};

struct ExperimentResult {
    ExperimentConfig config;
    std::string hash;
    std::vector<SeedResult> seeds;  // sorted by seed
    std::vector<NamedTable> summary;

    // Mean over seeds of one metric field of one method.
    double mean(const std::string& method, double MethodMetrics::*field) const;
    double mean_scalar(const std::string& name) const;
};

// One seed of one experiment; pure given (config, seed).
SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed);

// Runs every seed (in parallel worker slots, see worker_slots) and builds
// the summary tables.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Writes every table, plot table and (if cfg.svg) chart. Returns the paths
// in write order.
std::vector<std::filesystem::path> write_outputs(const ExperimentResult& result);

// <experiment>_<table>_seed<seed>_<hash prefix>.<ext>
std::string output_name(const ExperimentConfig& cfg, const std::string& hash, const std::string& table,
                        const std::string& seed_tag, const std::string& ext);

// KF_DMD_THREADS if set (>= 1), otherwise hardware concurrency.
unsigned worker_slots();

}  // namespace kfdmd
