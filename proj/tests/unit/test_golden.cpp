// Frozen file layout: names and column headers of every output file for a
// small configuration of each experiment. Regenerate with
// KFDMD_UPDATE_GOLDEN=1 after an intentional schema change.
#include "doctest.h"

#include "kfdmd/experiment.hpp"
#include "kfdmd/output.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace kfdmd;
using nlohmann::json;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// One line per file: name with the hash prefix replaced, then its columns.
std::string layout(const ExperimentResult& r, const std::vector<fs::path>& files) {
    const std::string prefix = r.hash.substr(0, 8);
    std::ostringstream out;
    for (const auto& f : files) {
        std::string name = f.filename().string();
        if (auto pos = name.find(prefix); pos != std::string::npos) name.replace(pos, prefix.size(), "HASH");
        out << name << ":";
        const std::string text = slurp(f);
        const std::string ext = f.extension().string();
        if (ext == ".csv") {
            const auto rows = parse_csv(text);
            for (const auto& c : rows.front()) out << " " << c;
        } else if (ext == ".json") {
            const json j = json::parse(text);
            if (j.is_array() && !j.empty())
                for (const auto& [k, v] : j.front().items()) out << " " << k;
            else if (j.is_object())
                for (const auto& [k, v] : j.items()) out << " " << k;
        } else {
            out << " " << ext.substr(1);
        }
        out << "\n";
    }
    return out.str();
}

void check_golden(const std::string& name, json doc) {
    const fs::path dir = fs::temp_directory_path() / ("kfdmd_golden_" + name);
    fs::remove_all(dir);
    doc["out"] = dir.string();
    const auto result = run_experiment(ExperimentConfig::from_json(doc));
    const std::string got = layout(result, write_outputs(result));
    fs::remove_all(dir);

    const fs::path golden = fs::path(KFDMD_SOURCE_DIR) / "tests" / "golden" / (name + ".txt");
    if (std::getenv("KFDMD_UPDATE_GOLDEN")) {
        std::ofstream(golden, std::ios::binary) << got;
        return;
    }
    REQUIRE(fs::exists(golden));
    CHECK(got == slurp(golden));
}

}  // namespace

TEST_CASE("golden layout: ode_auto") {
    check_golden("ode_auto", {{"experiment", "ode_auto"},
                              {"seeds", {0, 1}},
                              {"svg", true},
                              {"system", {{"steps", 60}, {"train_steps", 40}}},
                              {"filter", {{"delays", 5}, {"ensemble_size", 20}}}});
}

TEST_CASE("golden layout: ode_auto json") {
    check_golden("ode_auto_json", {{"experiment", "ode_auto"},
                                   {"seeds", {3}},
                                   {"format", "json"},
                                   {"system", {{"steps", 60}, {"train_steps", 40}}},
                                   {"filter", {{"delays", 5}, {"ensemble_size", 20}}}});
}

TEST_CASE("golden layout: fourier") {
    check_golden("fourier", {{"experiment", "fourier"},
                             {"seeds", {0}},
                             {"system", {{"nx", 16}, {"ny", 16}, {"steps", 40}, {"sigma_bg", 8e-3}, {"compression", 32}}},
                             {"filter", {{"ensemble_size", 20}}}});
}

TEST_CASE("golden layout: nonauto_linear") {
    check_golden("nonauto_linear",
                 {{"experiment", "nonauto_linear"}, {"seeds", {0}}, {"system", {{"steps", 200}}}, {"filter", {{"ensemble_size", 30}}}});
}

TEST_CASE("golden layout: allen_cahn") {
    check_golden("allen_cahn", {{"experiment", "allen_cahn"},
                                {"seeds", {0}},
                                {"system", {{"nx", 10}, {"ny", 10}, {"t_end", 3.0}}},
                                {"filter", {{"ensemble_size", 20}}}});
}

TEST_CASE("golden layout: lemma_sweep") {
    check_golden("lemma_sweep", {{"experiment", "lemma_sweep"}, {"seeds", {0}}, {"system", {{"instances", 10}}}});
}

TEST_CASE("golden bytes of a small table") {
    Table t({"sample", {{"method", ColumnType::text}, {"seed", ColumnType::integer}, {"value", ColumnType::real}}});
    t.add_row({std::string("enkf_dmd"), std::int64_t{0}, 0.1});
    t.add_row({std::string("a \"quoted\", name"), std::int64_t{-1}, std::nan("")});
    t.add_row({std::monostate{}, std::monostate{}, -1.5e-300});
    const fs::path dir = fs::path(KFDMD_SOURCE_DIR) / "tests" / "golden";
    if (std::getenv("KFDMD_UPDATE_GOLDEN")) {
        std::ofstream(dir / "table.csv", std::ios::binary) << to_csv(t);
        std::ofstream(dir / "table.json", std::ios::binary) << to_json(t);
        return;
    }
    CHECK(to_csv(t) == slurp(dir / "table.csv"));
    CHECK(to_json(t) == slurp(dir / "table.json"));
}
