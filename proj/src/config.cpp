#include "kfdmd/experiment.hpp"

#include "kfdmd/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace kfdmd {

using nlohmann::json;

ExperimentKind parse_experiment(const std::string& name) {
    if (name == "ode_auto") return ExperimentKind::ode_auto;
    if (name == "fourier") return ExperimentKind::fourier;
    if (name == "nonauto_linear") return ExperimentKind::nonauto_linear;
    if (name == "allen_cahn") return ExperimentKind::allen_cahn;
    if (name == "lemma_sweep") return ExperimentKind::lemma_sweep;
    throw ConfigError("unknown experiment '" + name +
                      "' (expected ode_auto, fourier, nonauto_linear, allen_cahn or lemma_sweep)");
}

std::string experiment_name(ExperimentKind e) {
    switch (e) {
        case ExperimentKind::ode_auto: return "ode_auto";
        case ExperimentKind::fourier: return "fourier";
        case ExperimentKind::nonauto_linear: return "nonauto_linear";
        case ExperimentKind::allen_cahn: return "allen_cahn";
        case ExperimentKind::lemma_sweep: return "lemma_sweep";
    }
    return "?";
}

std::uint64_t fnv1a64(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

json filter_defaults(const char* kind, Index n_members, json delays, Index rank, double pm, double pe, double pa,
                     double qm, double qe, double qa, double sel_eps, Index sel_rank) {
    return json{{"kind", kind},
                {"ensemble_size", n_members},
                {"delays", std::move(delays)},
                {"rank", rank},
                {"prior", {{"modes", pm}, {"eigenvalues", pe}, {"amplitudes", pa}}},
                {"state_noise_std", {{"modes", qm}, {"eigenvalues", qe}, {"amplitudes", qa}}},
                {"sigma", nullptr},
                {"delay_selection",
                 {{"epsilon", sel_eps}, {"max_n", 50}, {"rank", sel_rank}, {"relative", true}, {"matching", "sort_order"}}}};
}

// Recursively applies `patch` onto `base`. Keys absent from base are
// errors; a null default accepts any value.
void merge_into(json& base, const json& patch, const std::string& where) {
    if (!patch.is_object()) throw ConfigError(where + " must be an object");
    for (auto it = patch.begin(); it != patch.end(); ++it) {
        const std::string path = where.empty() ? it.key() : where + "." + it.key();
        if (!base.contains(it.key())) throw ConfigError("unknown config key '" + path + "'");
        json& slot = base[it.key()];
        if (slot.is_object() && !slot.empty())
            merge_into(slot, it.value(), path);
        else
            slot = it.value();
    }
}

const json& need(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ConfigError("missing config key '" + where + key + "'");
    return j.at(key);
}

double get_real(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_number()) throw ConfigError("config key '" + where + key + "' must be a number");
    return v.get<double>();
}

Index get_int(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_number_integer()) throw ConfigError("config key '" + where + key + "' must be an integer");
    return v.get<Index>();
}

std::string get_string(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_string()) throw ConfigError("config key '" + where + key + "' must be a string");
    return v.get<std::string>();
}

bool get_bool(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_boolean()) throw ConfigError("config key '" + where + key + "' must be true or false");
    return v.get<bool>();
}

Eigen::Vector2d get_vec2(const json& j, const char* key, const std::string& where) {
    const json& v = need(j, key, where);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError("config key '" + where + key + "' must be an array of two numbers");
    return {v[0].get<double>(), v[1].get<double>()};
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

Matching parse_matching(const std::string& s) {
    if (s == "sort_order") return Matching::sort_order;
    if (s == "greedy_nearest") return Matching::greedy_nearest;
    if (s == "optimal") return Matching::optimal;
    throw ConfigError("unknown eigenvalue matching '" + s + "'");
}

FilterSettings parse_filter(const json& f) {
    const std::string w = "filter.";
    FilterSettings s;
    const std::string kind = get_string(f, "kind", w);
    if (kind == "etkf")
        s.kind = FilterKind::etkf;
    else if (kind == "enkf")
        s.kind = FilterKind::enkf;
    else
        throw ConfigError("filter.kind must be etkf or enkf, got '" + kind + "'");
    s.ensemble_size = get_int(f, "ensemble_size", w);
    const json& d = need(f, "delays", w);
    if (d.is_string()) {
        require(d.get<std::string>() == "auto", "filter.delays must be an integer or \"auto\"");
    } else {
        require(d.is_number_integer() && d.get<Index>() >= 0, "filter.delays must be a nonnegative integer or \"auto\"");
        s.delays = d.get<Index>();
    }
    s.rank = get_int(f, "rank", w);
    require(s.rank >= 1, "filter.rank must be >= 1");
    require(s.ensemble_size >= 2, "filter.ensemble_size must be >= 2");
    const json& p = need(f, "prior", w);
    s.prior_modes = get_real(p, "modes", w + "prior.");
    s.prior_eigenvalues = get_real(p, "eigenvalues", w + "prior.");
    s.prior_amplitudes = get_real(p, "amplitudes", w + "prior.");
    require(s.prior_modes >= 0 && s.prior_eigenvalues >= 0 && s.prior_amplitudes >= 0,
            "filter.prior variances must be nonnegative");
    const json& q = need(f, "state_noise_std", w);
    s.q_modes = get_real(q, "modes", w + "state_noise_std.");
    s.q_eigenvalues = get_real(q, "eigenvalues", w + "state_noise_std.");
    s.q_amplitudes = get_real(q, "amplitudes", w + "state_noise_std.");
    require(s.q_modes >= 0 && s.q_eigenvalues >= 0 && s.q_amplitudes >= 0,
            "filter.state_noise_std entries must be nonnegative");
    const json& sg = need(f, "sigma", w);
    if (!sg.is_null()) {
        require(sg.is_number() && sg.get<double>() > 0, "filter.sigma must be a positive number or null");
        s.sigma = sg.get<double>();
    }
    const json& ds = need(f, "delay_selection", w);
    const std::string wd = w + "delay_selection.";
    s.selection.epsilon = get_real(ds, "epsilon", wd);
    s.selection.max_n = get_int(ds, "max_n", wd);
    s.selection.rank = get_int(ds, "rank", wd);
    s.selection.relative = get_bool(ds, "relative", wd);
    s.selection.matching = parse_matching(get_string(ds, "matching", wd));
    s.selection.validate();
    return s;
}

}  // namespace

json ExperimentConfig::defaults(ExperimentKind e) {
    json doc{{"experiment", experiment_name(e)},
             {"seeds", json::array({0})},
             {"out", "results"},
             {"format", "csv"},
             {"svg", false}};
    switch (e) {
        case ExperimentKind::ode_auto:
            doc["noise_sigma"] = 0.1;
            doc["filter"] = filter_defaults("etkf", 50, 30, 3, 1e-2, 1e-3, 1e-3, 0, 0, 0, 1e-2, 3);
            doc["system"] = {{"mu", -0.01}, {"lambda", -0.5}, {"dt", 1.0}, {"steps", 200}, {"train_steps", 100},
                             {"x0", {3.0, 3.0}}};
            break;
        case ExperimentKind::fourier: {
            doc["noise_sigma"] = 0.0;
            doc["filter"] = filter_defaults("etkf", 100, 2, 10, 1e-4, 1e-4, 1e-4, 0, 0, 0, 1e-2, 10);
            json modes = json::array();
            for (const auto& m : FourierSystemSpec::reference().modes)
                modes.push_back({{"i", m.i}, {"j", m.j}, {"damping", m.damping}, {"frequency", m.frequency},
                                 {"amplitude", m.amplitude}});
            doc["system"] = {{"nx", 128},  {"ny", 128},         {"dt", 0.1},     {"steps", 200},
                             {"sigma_bg", 1e-3}, {"compression", 64}, {"modes", modes}};
            break;
        }
        case ExperimentKind::nonauto_linear:
            doc["noise_sigma"] = 0.1;
            doc["filter"] = filter_defaults("etkf", 100, 4, 2, 1e-6, 1e-3, 1e-8, 0, 1e-4, 0, 1e-2, 2);
            doc["system"] = {{"omega", 2.0}, {"freq_divisor", 1.0}, {"dt", 0.01}, {"steps", 1000},
                             {"x0", {1.0, 0.0}}, {"burn_in", 0.1}};
            break;
        case ExperimentKind::allen_cahn:
            doc["noise_sigma"] = 0.1;
            doc["filter"] = filter_defaults("etkf", 50, "auto", 1, 1e-2, 1e-3, 1e-3, 0, 0, 0, 5e-2, 1);
            doc["system"] = {{"theta", 0.1}, {"mu", "constant"}, {"mu_value", 1.0}, {"nx", 20},
                             {"ny", 20},     {"dt", 0.05},       {"t_end", 5.0},   {"train_t_end", 2.0},
                             {"lift", "cubic"}, {"edmd_tau", 1e-10}};
            break;
        case ExperimentKind::lemma_sweep:
            doc["system"] = {{"instances", 200}};
            break;
    }
    return doc;
}

ExperimentConfig ExperimentConfig::from_json(const json& doc) {
    if (!doc.is_object()) throw ConfigError("config must be a JSON object");
    if (!doc.contains("experiment") || !doc.at("experiment").is_string())
        throw ConfigError("config needs a string 'experiment' field");
    ExperimentConfig cfg;
    cfg.experiment = parse_experiment(doc.at("experiment").get<std::string>());
    json r = defaults(cfg.experiment);
    merge_into(r, doc, "");

    const json& seeds = r.at("seeds");
    require(seeds.is_array() && !seeds.empty(), "seeds must be a nonempty array");
    cfg.seeds.clear();
    std::set<std::uint64_t> seen;
    for (const auto& s : seeds) {
        require(s.is_number_unsigned() || (s.is_number_integer() && s.get<std::int64_t>() >= 0),
                "seeds must be nonnegative integers");
        const auto v = s.get<std::uint64_t>();
        require(seen.insert(v).second, "duplicate seed " + std::to_string(v));
        cfg.seeds.push_back(v);
    }
    std::sort(cfg.seeds.begin(), cfg.seeds.end());
    cfg.out = get_string(r, "out", "");
    cfg.format = parse_format(get_string(r, "format", ""));
    cfg.svg = get_bool(r, "svg", "");

    const json& sys = r.at("system");
    const std::string w = "system.";
    switch (cfg.experiment) {
        case ExperimentKind::ode_auto: {
            auto& o = cfg.ode;
            o.mu = get_real(sys, "mu", w);
            o.lambda = get_real(sys, "lambda", w);
            o.dt = get_real(sys, "dt", w);
            o.steps = get_int(sys, "steps", w);
            o.train_steps = get_int(sys, "train_steps", w);
            o.x0 = get_vec2(sys, "x0", w);
            require(o.dt > 0, "system.dt must be > 0");
            require(o.train_steps >= 2 && o.train_steps < o.steps, "system.train_steps must lie in [2, steps)");
            break;
        }
        case ExperimentKind::fourier: {
            auto& f = cfg.fourier;
            f.nx = get_int(sys, "nx", w);
            f.ny = get_int(sys, "ny", w);
            f.dt = get_real(sys, "dt", w);
            f.steps = get_int(sys, "steps", w);
            f.sigma_bg = get_real(sys, "sigma_bg", w);
            f.compression = get_int(sys, "compression", w);
            require(f.compression >= 1, "system.compression must be >= 1");
            f.spec.modes.clear();
            const json& modes = need(sys, "modes", w);
            require(modes.is_array() && !modes.empty(), "system.modes must be a nonempty array");
            for (const auto& m : modes) {
                const std::string wm = w + "modes[].";
                f.spec.modes.push_back({static_cast<int>(get_int(m, "i", wm)), static_cast<int>(get_int(m, "j", wm)),
                                        get_real(m, "damping", wm), get_real(m, "frequency", wm),
                                        get_real(m, "amplitude", wm)});
            }
            break;
        }
        case ExperimentKind::nonauto_linear: {
            auto& n = cfg.nonauto;
            n.spec.omega = get_real(sys, "omega", w);
            n.spec.freq_divisor = get_real(sys, "freq_divisor", w);
            n.dt = get_real(sys, "dt", w);
            n.steps = get_int(sys, "steps", w);
            n.x0 = get_vec2(sys, "x0", w);
            n.burn_in = get_real(sys, "burn_in", w);
            require(n.dt > 0, "system.dt must be > 0");
            require(n.spec.freq_divisor > 0, "system.freq_divisor must be > 0");
            require(n.burn_in >= 0 && n.burn_in < 1, "system.burn_in must lie in [0, 1)");
            break;
        }
        case ExperimentKind::allen_cahn: {
            auto& a = cfg.allen_cahn;
            a.theta = get_real(sys, "theta", w);
            a.mu = get_string(sys, "mu", w);
            require(a.mu == "constant" || a.mu == "sin", "system.mu must be \"constant\" or \"sin\"");
            a.mu_value = get_real(sys, "mu_value", w);
            a.nx = get_int(sys, "nx", w);
            a.ny = get_int(sys, "ny", w);
            a.dt = get_real(sys, "dt", w);
            a.t_end = get_real(sys, "t_end", w);
            a.train_t_end = get_real(sys, "train_t_end", w);
            a.lift = get_string(sys, "lift", w);
            require(a.lift == "cubic" || a.lift == "identity", "system.lift must be \"cubic\" or \"identity\"");
            a.edmd_tau = get_real(sys, "edmd_tau", w);
            require(a.dt > 0 && a.train_t_end > 0 && a.train_t_end < a.t_end,
                    "system needs dt > 0 and 0 < train_t_end < t_end");
            break;
        }
        case ExperimentKind::lemma_sweep:
            cfg.lemma.instances = get_int(sys, "instances", w);
            require(cfg.lemma.instances >= 1, "system.instances must be >= 1");
            break;
    }
    if (cfg.experiment != ExperimentKind::lemma_sweep) {
        cfg.noise_sigma = get_real(r, "noise_sigma", "");
        require(cfg.noise_sigma >= 0, "noise_sigma must be >= 0");
        cfg.filter = parse_filter(r.at("filter"));
    }
    cfg.resolved = std::move(r);
    return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    json doc;
    try {
        doc = json::parse(ss.str());
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(doc);
}

std::string ExperimentConfig::canonical() const {
    json c = resolved;
    for (const char* k : {"seeds", "out", "format", "svg"}) c.erase(k);
    return c.dump();
}

std::string ExperimentConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical())));
    return buf;
}

}  // namespace kfdmd
