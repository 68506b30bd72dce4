// Batch driver: kfdmd --config configs/ode_auto.json --seed 0 --seed 1 --out results
#include "kfdmd/error.hpp"
#include "kfdmd/experiment.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <iostream>

namespace {

enum Exit { ok = 0, config_error = 2, numerical_error = 3, io_error = 4 };

void report(const char* kind, const std::exception& e) {
    nlohmann::json j{{"status", "error"}, {"kind", kind}, {"message", e.what()}};
    std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EnKF-DMD experiment runner"};
    std::string config_path, experiment, out, format, filter;
    std::vector<std::uint64_t> seeds;
    bool svg = false, quiet = false, print_config = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--experiment", experiment, "ode_auto | fourier | nonauto_linear | allen_cahn | lemma_sweep");
    app.add_option("--seed", seeds, "seed (repeatable); replaces the config's seed list");
    app.add_option("--out", out, "output directory");
    app.add_option("--format", format, "csv | json");
    app.add_option("--filter", filter, "etkf | enkf");
    app.add_flag("--svg", svg, "also write SVG charts");
    app.add_flag("-q,--quiet", quiet, "do not print the summary");
    app.add_flag("--print-config", print_config, "print the resolved config and exit");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        nlohmann::json doc = nlohmann::json::object();
        if (!config_path.empty()) {
            doc = kfdmd::ExperimentConfig::from_file(config_path).resolved;
            if (!experiment.empty() && experiment != doc.at("experiment").get<std::string>())
                throw kfdmd::ConfigError("--experiment " + experiment + " conflicts with the config file's experiment " +
                                         doc.at("experiment").get<std::string>());
        } else {
            if (experiment.empty()) throw kfdmd::ConfigError("need --config or --experiment");
            doc["experiment"] = experiment;
        }
        if (!seeds.empty()) doc["seeds"] = seeds;
        if (!out.empty()) doc["out"] = out;
        if (!format.empty()) doc["format"] = format;
        if (svg) doc["svg"] = true;
        if (!filter.empty()) {
            if (doc.at("experiment") == "lemma_sweep") throw kfdmd::ConfigError("--filter does not apply to lemma_sweep");
            doc["filter"]["kind"] = filter;
        }
        const auto cfg = kfdmd::ExperimentConfig::from_json(doc);
        if (print_config) {
            std::printf("%s\n", cfg.resolved.dump(2).c_str());
            return ok;
        }
        const auto result = kfdmd::run_experiment(cfg);
        const auto files = kfdmd::write_outputs(result);

        if (!quiet) {
            std::printf("%s config %s, %zu seed(s), %zu file(s) in %s\n", kfdmd::experiment_name(cfg.experiment).c_str(),
                        result.hash.c_str(), cfg.seeds.size(), files.size(), cfg.out.string().c_str());
            for (const auto& nt : result.summary) {
                if (nt.name != "metrics_mean") continue;
                for (std::size_t i = 0; i < nt.table.size(); ++i)
                    std::printf("  %-20s eig %-12.5g rec %-12.5g pred %-12.5g\n",
                                std::get<std::string>(nt.table.at(i, "method")).c_str(),
                                nt.table.real(i, "eigenvalue_error"), nt.table.real(i, "reconstruction_rmse"),
                                nt.table.real(i, "prediction_rmse"));
            }
            if (!result.seeds.front().scalars.empty())
                for (const auto& [name, v] : result.seeds.front().scalars) {
                    (void)v;
                    std::printf("  %-32s %.6g\n", name.c_str(), result.mean_scalar(name));
                }
        }
        return ok;
    } catch (const kfdmd::ConfigError& e) {
        report("config", e);
        return config_error;
    } catch (const kfdmd::NumericalError& e) {
        report("numerical", e);
        return numerical_error;
    } catch (const kfdmd::IoError& e) {
        report("io", e);
        return io_error;
    } catch (const nlohmann::json::exception& e) {
        report("config", e);
        return config_error;
    } catch (const std::exception& e) {
        report("numerical", e);
        return numerical_error;
    }
}
