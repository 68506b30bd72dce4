#include "kfdmd/experiment.hpp"

#include "kfdmd/dmd.hpp"
#include "kfdmd/error.hpp"
#include "kfdmd/theory.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <thread>

namespace kfdmd {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Columns every table carries.
struct Stamp {
    std::string hash;
    std::uint64_t seed;

    void add_columns(Schema& s) const {
        s.columns.push_back({"config_hash", ColumnType::text});
        s.columns.push_back({"seed", ColumnType::integer});
    }
    void add_cells(std::vector<Cell>& row) const {
        row.emplace_back(hash);
        row.emplace_back(static_cast<std::int64_t>(seed));
    }
};

Table make_table(const std::string& name, std::vector<Column> cols, const Stamp& st) {
    Schema s{name, std::move(cols)};
    st.add_columns(s);
    return Table(std::move(s));
}

void add(Table& t, std::vector<Cell> row, const Stamp& st) {
    st.add_cells(row);
    t.add_row(std::move(row));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    if (a.size() < 2 || a.size() != b.size()) return kNaN;
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
    ma /= n;
    mb /= n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : kNaN;
}

FilterConfig filter_config(const FilterSettings& f, Index rank, Index dim, Index delays, double sigma,
                           std::uint64_t seed, RunMode mode) {
    if (!(sigma > 0.0))
        throw ConfigError("filter noise level must be > 0; set filter.sigma for noise-free data");
    FilterConfig cfg;
    cfg.ensemble_size = f.ensemble_size;
    cfg.kind = f.kind;
    cfg.rank = rank;
    cfg.delays = delays;
    cfg.seed = seed;
    cfg.keep_covariance_history = false;
    cfg.prior = PriorCovariance::blocks(rank, dim, f.prior_modes, f.prior_eigenvalues, f.prior_amplitudes);
    const bool any_q = f.q_modes > 0 || f.q_eigenvalues > 0 || f.q_amplitudes > 0;
    if (mode == RunMode::autonomous || !any_q) {
        cfg.noise = NoiseSpec::autonomous(sigma);
    } else if (f.q_modes == f.q_eigenvalues && f.q_modes == f.q_amplitudes) {
        cfg.noise = NoiseSpec::isotropic(sigma, f.q_modes * f.q_modes);
    } else {
        const Index p = SpectralParams::flat_size(rank, dim);
        const Index eo = SpectralParams::eigenvalue_offset(rank, dim), ao = SpectralParams::amplitude_offset(rank, dim);
        Eigen::VectorXd q(p);
        q.head(eo).setConstant(f.q_modes * f.q_modes);
        q.segment(eo, ao - eo).setConstant(f.q_eigenvalues * f.q_eigenvalues);
        q.tail(p - ao).setConstant(f.q_amplitudes * f.q_amplitudes);
        cfg.noise = NoiseSpec::dense(sigma, q.asDiagonal().toDenseMatrix());
    }
    return cfg;
}

Eigen::MatrixXd reconstruct_range(const SpectralParams& p, Index first, Index last) {
    Eigen::MatrixXd out(p.dim(), last - first + 1);
    for (Index k = first; k <= last; ++k) out.col(k - first) = reconstruct(p, k);
    return out;
}

// Appends one row per reference eigenvalue with each estimate paired to it
// by the optimal assignment.
Table eigenvalue_table(const Eigen::VectorXcd& truth, const std::vector<std::pair<std::string, Eigen::VectorXcd>>& est,
                       const Stamp& st) {
    std::vector<Column> cols{{"index", ColumnType::integer}, {"truth_re", ColumnType::real}, {"truth_im", ColumnType::real}};
    for (const auto& [name, v] : est) {
        cols.push_back({name + "_re", ColumnType::real});
        cols.push_back({name + "_im", ColumnType::real});
    }
    Table t = make_table("eigenvalues", std::move(cols), st);
    std::vector<std::vector<Index>> perms;
    for (const auto& e : est) perms.push_back(match_eigenvalues(e.second, truth, Matching::optimal));
    for (Index i = 0; i < truth.size(); ++i) {
        std::vector<Cell> row{static_cast<std::int64_t>(i), truth(i).real(), truth(i).imag()};
        for (std::size_t m = 0; m < est.size(); ++m) {
            const cplx z = est[m].second(perms[m][static_cast<std::size_t>(i)]);
            row.emplace_back(z.real());
            row.emplace_back(z.imag());
        }
        add(t, std::move(row), st);
    }
    return t;
}

Table metrics_table(const std::vector<MethodMetrics>& methods, const Stamp& st) {
    Table t = make_table("metrics",
                         {{"method", ColumnType::text},
                          {"eigenvalue_error", ColumnType::real},
                          {"reconstruction_rmse", ColumnType::real},
                          {"prediction_rmse", ColumnType::real}},
                         st);
    for (const auto& m : methods) add(t, {m.method, m.eigenvalue_error, m.reconstruction_rmse, m.prediction_rmse}, st);
    return t;
}

Table scalars_table(const std::map<std::string, double>& scalars, const Stamp& st) {
    Table t = make_table("scalars", {{"name", ColumnType::text}, {"value", ColumnType::real}}, st);
    for (const auto& [k, v] : scalars) add(t, {k, v}, st);
    return t;
}

Table ledger_table(const MisfitLedger& l, const Stamp& st) {
    Table t = make_table("misfit",
                         {{"step", ColumnType::integer},
                          {"misfit", ColumnType::real},
                          {"noise_norm", ColumnType::real},
                          {"drift_norm", ColumnType::real},
                          {"avg_misfit", ColumnType::real},
                          {"avg_noise", ColumnType::real},
                          {"avg_noise_sq", ColumnType::real},
                          {"avg_drift", ColumnType::real}},
                         st);
    for (std::size_t i = 0; i < l.size(); ++i)
        add(t,
            {static_cast<std::int64_t>(l.steps[i]), l.misfit[i], l.noise_norm[i], l.drift_norm[i], l.avg_misfit[i],
             l.avg_noise[i], l.avg_noise_sq[i], l.avg_drift[i]},
            st);
    return t;
}

PlotSeries series_of(const std::string& name, Index first, const Eigen::Ref<const Eigen::VectorXd>& v) {
    PlotSeries s{name, {}, {}};
    for (Index i = 0; i < v.size(); ++i) {
        s.steps.push_back(static_cast<std::int64_t>(first + i));
        s.values.push_back(v(i));
    }
    return s;
}

// Stacked data noise per posterior step.
Eigen::MatrixXd stacked_noise(const SnapshotSeries& noisy, const SnapshotSeries& clean, const FilterTrajectory& tr) {
    const SnapshotSeries diff(noisy.values() - clean.values(), noisy.dt(), noisy.t0());
    Eigen::MatrixXd out(clean.dim() * (tr.delays + 1), static_cast<Index>(tr.posteriors.size()));
    for (std::size_t i = 0; i < tr.posteriors.size(); ++i)
        out.col(static_cast<Index>(i)) = delay_stack(diff, DelayWindow(tr.delays, tr.posteriors[i].step()));
    return out;
}

void add_misfit(SeedResult& res, const FilterTrajectory& tr, const Eigen::Ref<const Eigen::MatrixXd>& theta,
                const Eigen::Ref<const Eigen::MatrixXd>& noise, const Stamp& st) {
    const MisfitLedger led = misfit_ledger(tr, theta, noise);
    const std::size_t last = led.size() - 1;
    res.scalars["misfit_final_avg"] = led.avg_misfit[last];
    res.scalars["misfit_slope_final_decade"] = led.size() >= 10 ? final_decade_slope(led) : kNaN;
    const MisfitFit fit = fit_misfit(led);
    res.scalars["misfit_fit_c1"] = fit.c1;
    res.scalars["misfit_fit_c2"] = fit.c2;
    res.scalars["misfit_fit_c3"] = fit.c3;
    res.scalars["misfit_fit_residual"] = fit.relative_residual;
    const double noise_term = fit.c2 * led.avg_noise[last];
    res.scalars["misfit_noise_term"] = noise_term;
    res.scalars["misfit_plateau_ratio"] = noise_term > 0 ? led.avg_misfit[last] / noise_term : kNaN;
    res.tables.push_back({"misfit", ledger_table(led, st)});

    PlotTrack track{"misfit_track", "step", "running average", {}};
    PlotSeries a{"avg_misfit", {}, {}}, b{"fitted_noise_term", {}, {}};
    for (std::size_t i = 0; i < led.size(); ++i) {
        a.steps.push_back(static_cast<std::int64_t>(led.steps[i]));
        a.values.push_back(led.avg_misfit[i]);
        b.steps.push_back(static_cast<std::int64_t>(led.steps[i]));
        b.values.push_back(fit.c2 * led.avg_noise[i]);
    }
    track.series = {std::move(a), std::move(b)};
    res.tracks.push_back(std::move(track));
}

// ---------------------------------------------------------------------------

SeedResult run_ode(const ExperimentConfig& cfg, std::uint64_t seed, const Stamp& st) {
    const auto& o = cfg.ode;
    const Index r = cfg.filter.rank;
    const GroundTruth truth = gen_ode_auto(o.mu, o.lambda, o.dt, o.steps, o.x0);
    const Eigen::VectorXcd te = truth.eigenvalues.col(0);
    const SnapshotSeries train = truth.series.slice(0, o.train_steps + 1);
    const SnapshotSeries noisy = add_noise(train, cfg.noise_sigma, seed);

    const SpectralParams clean_dmd = exact_dmd(train, RankPolicy::fixed(r));
    const SpectralParams noisy_dmd = exact_dmd(noisy, RankPolicy::fixed(r));
    Index n = 0;
    SeedResult res;
    if (cfg.filter.delays) {
        n = *cfg.filter.delays;
    } else {
        const DelaySelection sel = select_delay(noisy, cfg.filter.selection);
        n = sel.n;
        res.scalars["delay_saturated"] = sel.saturated ? 1.0 : 0.0;
    }
    res.scalars["delays"] = static_cast<double>(n);
    const FilterConfig fcfg = filter_config(cfg.filter, r, train.dim(), n, cfg.filter.sigma.value_or(cfg.noise_sigma),
                                            seed, RunMode::autonomous);
    const FilterTrajectory tr = run_filter(noisy, noisy_dmd, fcfg, RunMode::autonomous);
    const SpectralParams fin = tr.final_params();

    const Index m = o.train_steps, last = o.steps;
    const Eigen::MatrixXd future = truth.series.values().rightCols(last - m);
    auto metrics = [&](const std::string& name, const SpectralParams& p) {
        return MethodMetrics{name, mean_eigenvalue_error(p.eigenvalues(), te),
                             rmse(reconstruct_range(p, 0, m), train.values()),
                             rmse(reconstruct_range(p, m + 1, last), future)};
    };
    res.methods = {metrics("dmd_clean", clean_dmd), metrics("dmd_noisy", noisy_dmd), metrics("enkf_dmd", fin)};
    res.tables.push_back({"eigenvalues", eigenvalue_table(te,
                                                          {{"dmd_clean", clean_dmd.eigenvalues()},
                                                           {"dmd_noisy", noisy_dmd.eigenvalues()},
                                                           {"enkf_dmd", fin.eigenvalues()}},
                                                          st)});
    res.tables.push_back({"metrics", metrics_table(res.methods, st)});

    // True parameters from the eigendecomposition of exp(A dt).
    if (r == truth.series.dim()) {
        const Eigen::Matrix3d step = (lifted_generator(o.mu, o.lambda) * o.dt).exp();
        Eigen::EigenSolver<Eigen::Matrix3d> es(step);
        const Eigen::MatrixXcd v = es.eigenvectors();
        const Eigen::VectorXcd b = v.partialPivLu().solve(train.column(0).cast<cplx>());
        const Eigen::VectorXd theta = SpectralParams(v, es.eigenvalues(), b).flatten();
        add_misfit(res, tr, theta, stacked_noise(noisy, train, tr), st);
    }

    for (Index c = 0; c < train.dim(); ++c) {
        PlotTrack t{"trajectory_y" + std::to_string(c + 1), "step", "observable " + std::to_string(c + 1), {}};
        t.series.push_back(series_of("truth", 0, truth.series.values().row(c).transpose()));
        t.series.push_back(series_of("noisy", 0, noisy.values().row(c).transpose()));
        t.series.push_back(series_of("dmd_noisy", 0, reconstruct_range(noisy_dmd, 0, last).row(c).transpose()));
        t.series.push_back(series_of("enkf_dmd", 0, reconstruct_range(fin, 0, last).row(c).transpose()));
        res.tracks.push_back(std::move(t));
    }
    return res;
}

// Unit-norm copy of `v` rotated so that <ref, v> is real and positive.
Eigen::VectorXcd align(const Eigen::VectorXcd& v, const Eigen::VectorXcd& ref) {
    const double nv = v.norm();
    if (nv == 0.0) return v;
    const cplx ip = ref.dot(v);
    const cplx rot = std::abs(ip) > 0 ? std::conj(ip) / std::abs(ip) : cplx(1.0, 0.0);
    return v * rot / nv;
}

SeedResult run_fourier(const ExperimentConfig& cfg, std::uint64_t seed, const Stamp& st) {
    const auto& f = cfg.fourier;
    const Index r = cfg.filter.rank;
    const GroundTruth truth = gen_fourier_system(f.spec, f.nx, f.ny, f.sigma_bg, f.dt, f.steps, seed);
    const GroundTruth clean = gen_fourier_system(f.spec, f.nx, f.ny, 0.0, f.dt, f.steps, seed);
    const SnapshotSeries data = add_noise(truth.series, cfg.noise_sigma, seed);
    const Eigen::VectorXcd te = truth.eigenvalues.col(0);
    const Index d = data.dim();

    const auto [y0, y1] = build_data_matrices(data);
    const Eigen::MatrixXd c = gaussian_compression(f.compression, d, seed);
    const SpectralParams cd = compressed_dmd(y0, y1, c, RankPolicy::fixed(r));
    const SpectralParams ed = exact_dmd(y0, y1, RankPolicy::fixed(r));

    SeedResult res;
    const Index n = cfg.filter.delays ? *cfg.filter.delays : select_delay(data, cfg.filter.selection).n;
    res.scalars["delays"] = static_cast<double>(n);
    const double bg = fourier_background_std(f.nx, f.ny, static_cast<Index>(f.spec.modes.size()), f.sigma_bg);
    const double sigma = cfg.filter.sigma.value_or(std::sqrt(bg * bg + cfg.noise_sigma * cfg.noise_sigma));
    res.scalars["filter_sigma"] = sigma;
    const FilterTrajectory tr =
        run_filter(data, cd, filter_config(cfg.filter, r, d, n, sigma, seed, RunMode::autonomous), RunMode::autonomous);
    const SpectralParams fin = tr.final_params();

    const Index last = data.last();
    auto metrics = [&](const std::string& name, const SpectralParams& p) {
        return MethodMetrics{name, mean_eigenvalue_error(p.eigenvalues(), te),
                             rmse(reconstruct_range(p, 0, last), clean.series.values()), kNaN};
    };
    res.methods = {metrics("compressed_dmd", cd), metrics("exact_dmd", ed), metrics("enkf_dmd", fin)};
    res.scalars["eigenvalue_error_ratio"] = res.methods[0].eigenvalue_error / res.methods[2].eigenvalue_error;
    res.tables.push_back({"eigenvalues", eigenvalue_table(te,
                                                          {{"compressed_dmd", cd.eigenvalues()},
                                                           {"exact_dmd", ed.eigenvalues()},
                                                           {"enkf_dmd", fin.eigenvalues()}},
                                                          st)});
    res.tables.push_back({"metrics", metrics_table(res.methods, st)});

    // Mode fields for the e^{(d + i omega) dt} member of each pair.
    Table modes = make_table("mode_fields",
                             {{"mode", ColumnType::integer},
                              {"pixel", ColumnType::integer},
                              {"truth_re", ColumnType::real},
                              {"truth_im", ColumnType::real},
                              {"compressed_dmd_re", ColumnType::real},
                              {"compressed_dmd_im", ColumnType::real},
                              {"enkf_dmd_re", ColumnType::real},
                              {"enkf_dmd_im", ColumnType::real}},
                             st);
    const auto pc = match_eigenvalues(cd.eigenvalues(), te, Matching::optimal);
    const auto pf = match_eigenvalues(fin.eigenvalues(), te, Matching::optimal);
    double sim_c = 0, sim_f = 0;
    for (std::size_t q = 0; q < f.spec.modes.size(); ++q) {
        const auto& fm = f.spec.modes[q];
        const Index row = 2 * static_cast<Index>(q);
        const Eigen::VectorXcd tm = fourier_mode_field(fm.i, fm.j, f.nx, f.ny).normalized();
        const Eigen::VectorXcd mc = align(cd.modes().col(pc[static_cast<std::size_t>(row)]), tm);
        const Eigen::VectorXcd mf = align(fin.modes().col(pf[static_cast<std::size_t>(row)]), tm);
        sim_c += std::abs(tm.dot(mc));
        sim_f += std::abs(tm.dot(mf));
        for (Index p = 0; p < d; ++p)
            add(modes,
                {static_cast<std::int64_t>(q), static_cast<std::int64_t>(p), tm(p).real(), tm(p).imag(), mc(p).real(),
                 mc(p).imag(), mf(p).real(), mf(p).imag()},
                st);
    }
    const double nm = static_cast<double>(f.spec.modes.size());
    res.scalars["mode_similarity_compressed_dmd"] = sim_c / nm;
    res.scalars["mode_similarity_enkf_dmd"] = sim_f / nm;
    res.tables.push_back({"mode_fields", std::move(modes)});

    PlotTrack t{"eigenvalue_error_track", "step", "mean eigenvalue error", {}};
    PlotSeries s{"enkf_dmd", {}, {}};
    for (std::size_t i = 0; i < tr.posteriors.size(); ++i) {
        s.steps.push_back(static_cast<std::int64_t>(tr.posteriors[i].step()));
        s.values.push_back(mean_eigenvalue_error(tr.params(i).eigenvalues(), te));
    }
    PlotSeries base{"compressed_dmd", s.steps, std::vector<double>(s.steps.size(), res.methods[0].eigenvalue_error)};
    t.series = {std::move(s), std::move(base)};
    res.tracks.push_back(std::move(t));
    return res;
}

double mean_modulus(const Eigen::VectorXcd& v) { return v.cwiseAbs().mean(); }

SeedResult run_nonauto(const ExperimentConfig& cfg, std::uint64_t seed, const Stamp& st) {
    const auto& na = cfg.nonauto;
    const Index r = cfg.filter.rank;
    const GroundTruth truth = gen_nonauto_linear(na.spec, na.dt, na.steps, na.x0);
    const SnapshotSeries noisy = add_noise(truth.series, cfg.noise_sigma, seed);
    const SpectralParams init = exact_dmd(noisy, RankPolicy::fixed(r));

    SeedResult res;
    const Index n = cfg.filter.delays ? *cfg.filter.delays : select_delay(noisy, cfg.filter.selection).n;
    res.scalars["delays"] = static_cast<double>(n);
    const FilterConfig fcfg = filter_config(cfg.filter, r, noisy.dim(), n, cfg.filter.sigma.value_or(cfg.noise_sigma),
                                            seed, RunMode::nonautonomous);
    const FilterTrajectory tr = run_filter(noisy, init, fcfg, RunMode::nonautonomous);

    const auto steps = static_cast<Index>(tr.posteriors.size());
    const auto burn = static_cast<Index>(std::floor(na.burn_in * static_cast<double>(steps)));
    res.scalars["burn_in_steps"] = static_cast<double>(burn);

    Table track = make_table("eigenvalue_track",
                             {{"step", ColumnType::integer},
                              {"t", ColumnType::real},
                              {"truth_re", ColumnType::real},
                              {"truth_im", ColumnType::real},
                              {"truth_modulus", ColumnType::real},
                              {"enkf_re", ColumnType::real},
                              {"enkf_im", ColumnType::real},
                              {"enkf_modulus", ColumnType::real}},
                             st);
    Eigen::MatrixXd rec(noisy.dim(), steps), clean(noisy.dim(), steps), raw(noisy.dim(), steps),
        glob(noisy.dim(), steps);
    std::vector<double> est_mod, true_mod;
    double eig_err = 0;
    Index eig_count = 0;
    PlotSeries pm_t{"truth", {}, {}}, pm_e{"enkf_dmd", {}, {}}, pr_t{"truth", {}, {}}, pr_e{"enkf_dmd", {}, {}};
    for (Index i = 0; i < steps; ++i) {
        const SpectralParams p = tr.params(static_cast<std::size_t>(i));
        const Index k = tr.posteriors[static_cast<std::size_t>(i)].step();
        rec.col(i) = reconstruct(p, k);
        clean.col(i) = truth.series.column(k);
        raw.col(i) = noisy.column(k);
        glob.col(i) = reconstruct(init, k);
        const Eigen::VectorXcd tk = truth.eigenvalues.col(k);
        // The top eigenvalue by the dmd order; real part tracks growth.
        const cplx lead = p.eigenvalues()(0);
        const double em = mean_modulus(p.eigenvalues()), tm = std::abs(tk(0));
        if (i >= burn) {
            est_mod.push_back(em);
            true_mod.push_back(tm);
            eig_err += mean_eigenvalue_error(p.eigenvalues(), tk);
            ++eig_count;
        }
        add(track, {static_cast<std::int64_t>(k), truth.series.time(k), tk(0).real(), tk(0).imag(), tm, lead.real(),
                    lead.imag(), em},
            st);
        pm_t.steps.push_back(k), pm_t.values.push_back(tm);
        pm_e.steps.push_back(k), pm_e.values.push_back(em);
        pr_t.steps.push_back(k), pr_t.values.push_back(tk(0).real());
        pr_e.steps.push_back(k), pr_e.values.push_back(lead.real());
    }
    res.scalars["pearson_modulus"] = pearson(est_mod, true_mod);
    res.methods = {MethodMetrics{"enkf_dmd", eig_count ? eig_err / static_cast<double>(eig_count) : kNaN,
                                 rmse(rec, clean), kNaN},
                   MethodMetrics{"dmd_noisy", kNaN, rmse(glob, clean), kNaN},
                   MethodMetrics{"noisy_data", kNaN, rmse(raw, clean), kNaN}};
    res.tables.push_back({"eigenvalue_track", std::move(track)});
    res.tables.push_back({"metrics", metrics_table(res.methods, st)});

    res.tracks.push_back({"eigenvalue_modulus", "step", "|lambda|", {std::move(pm_t), std::move(pm_e)}});
    res.tracks.push_back({"eigenvalue_real", "step", "Re lambda", {std::move(pr_t), std::move(pr_e)}});
    PlotTrack traj{"trajectory_x1", "step", "x1", {}};
    traj.series.push_back(series_of("truth", n, clean.row(0).transpose()));
    traj.series.push_back(series_of("noisy", n, raw.row(0).transpose()));
    traj.series.push_back(series_of("enkf_dmd", n, rec.row(0).transpose()));
    res.tracks.push_back(std::move(traj));
    return res;
}

SeedResult run_allen_cahn(const ExperimentConfig& cfg, std::uint64_t seed, const Stamp& st) {
    const auto& a = cfg.allen_cahn;
    AllenCahnSpec spec;
    spec.theta = a.theta;
    spec.nx = a.nx;
    spec.ny = a.ny;
    spec.dt = a.dt;
    spec.t_end = a.t_end;
    const double mu = a.mu_value;
    if (a.mu == "sin")
        spec.mu = [mu](double t) { return mu * std::sin(t); };
    else
        spec.mu = [mu](double) { return mu; };
    const RunMode mode = a.mu == "sin" ? RunMode::nonautonomous : RunMode::autonomous;

    const GroundTruth truth = gen_allen_cahn(spec);
    const Index d = truth.series.dim(), last = truth.series.last();
    const auto ktrain = static_cast<Index>(std::llround(a.train_t_end / a.dt));
    if (ktrain < 3 || ktrain >= last) throw ConfigError("allen_cahn: training window must hold 3..steps-1 snapshots");
    const SnapshotSeries noisy = add_noise(truth.series, cfg.noise_sigma, seed);
    const SnapshotSeries train = noisy.slice(0, ktrain + 1);
    const Dictionary dict = a.lift == "cubic" ? Dictionary::cubic(d) : Dictionary::identity(d);
    const SnapshotSeries lifted = lift_series(train, dict);
    const Index r = cfg.filter.rank;

    const auto [y0, y1] = build_data_matrices(lifted);
    const SpectralParams edmd = exact_dmd(y0, y1, RankPolicy::threshold(a.edmd_tau));
    const SpectralParams edmd_r = exact_dmd(y0, y1, RankPolicy::fixed(r));

    SeedResult res;
    res.scalars["edmd_rank"] = static_cast<double>(edmd.rank());
    Index n = 0;
    if (cfg.filter.delays) {
        n = *cfg.filter.delays;
    } else {
        const DelaySelection sel = select_delay(lifted, cfg.filter.selection);
        n = sel.n;
        res.scalars["delay_saturated"] = sel.saturated ? 1.0 : 0.0;
    }
    res.scalars["delays"] = static_cast<double>(n);
    const FilterConfig fcfg =
        filter_config(cfg.filter, r, lifted.dim(), n, cfg.filter.sigma.value_or(cfg.noise_sigma), seed, mode);
    const FilterTrajectory tr = run_filter(lifted, edmd_r, fcfg, mode);
    const SpectralParams fin = tr.final_params();

    const Eigen::MatrixXd past = truth.series.values().leftCols(ktrain + 1);
    const Eigen::MatrixXd future = truth.series.values().rightCols(last - ktrain + 1);
    auto metrics = [&](const std::string& name, const SpectralParams& p) {
        return MethodMetrics{name, kNaN, rmse(reconstruct_range(p, 0, ktrain).topRows(d), past),
                             rmse(reconstruct_range(p, ktrain, last).topRows(d), future)};
    };
    res.methods = {metrics("edmd_noisy", edmd), metrics("edmd_noisy_rank_r", edmd_r), metrics("enkf_dmd", fin)};
    res.methods.push_back(MethodMetrics{"zero", kNaN, rmse(Eigen::MatrixXd::Zero(d, ktrain + 1), past),
                                        rmse(Eigen::MatrixXd::Zero(d, last - ktrain + 1), future)});
    res.scalars["enkf_leading_modulus"] = std::abs(fin.eigenvalues()(0));
    res.scalars["edmd_leading_modulus"] = std::abs(edmd.eigenvalues()(0));
    res.tables.push_back({"metrics", metrics_table(res.methods, st)});

    // Predicted fields at whole times inside the prediction window.
    Table fields = make_table("fields",
                              {{"t", ColumnType::real},
                               {"i", ColumnType::integer},
                               {"j", ColumnType::integer},
                               {"truth", ColumnType::real},
                               {"edmd_noisy", ColumnType::real},
                               {"enkf_dmd", ColumnType::real}},
                              st);
    for (Index k = ktrain; k <= last; ++k) {
        const double t = truth.series.time(k);
        if (std::abs(t - std::round(t)) > 1e-9) continue;
        const Eigen::VectorXd ue = reconstruct(edmd, k).head(d), uf = reconstruct(fin, k).head(d);
        for (Index j = 0; j <= a.ny; ++j)
            for (Index i = 0; i <= a.nx; ++i) {
                const Index q = allen_cahn_index(i, j, a.nx);
                add(fields, {t, static_cast<std::int64_t>(i), static_cast<std::int64_t>(j), truth.series.values()(q, k),
                             ue(q), uf(q)},
                    st);
            }
    }
    res.tables.push_back({"fields", std::move(fields)});

    PlotTrack t{"prediction_error", "step", "snapshot error norm", {}};
    PlotSeries se{"edmd_noisy", {}, {}}, sf{"enkf_dmd", {}, {}};
    for (Index k = ktrain; k <= last; ++k) {
        const Eigen::VectorXd u = truth.series.column(k);
        se.steps.push_back(k), se.values.push_back((reconstruct(edmd, k).head(d) - u).norm());
        sf.steps.push_back(k), sf.values.push_back((reconstruct(fin, k).head(d) - u).norm());
    }
    t.series = {std::move(se), std::move(sf)};
    res.tracks.push_back(std::move(t));
    return res;
}

SeedResult run_lemma(const ExperimentConfig& cfg, std::uint64_t seed, const Stamp& st) {
    const LemmaSweep s = lemma_sweep(cfg.lemma.instances, seed);
    SeedResult res;
    res.scalars = {{"instances", static_cast<double>(s.instances)},
                   {"max_cov_residual", s.max_cov_residual},
                   {"min_w_slack", s.min_w_slack},
                   {"min_w_slack_relative", s.min_w_slack_relative},
                   {"min_gain_slack", s.min_gain_slack},
                   {"min_gain_slack_relative", s.min_gain_slack_relative},
                   {"min_gain_slack_relative_with_q", s.min_gain_slack_relative_with_q}};
    Table t = make_table("lemma",
                         {{"instances", ColumnType::integer},
                          {"max_cov_residual", ColumnType::real},
                          {"min_w_slack", ColumnType::real},
                          {"min_w_slack_relative", ColumnType::real},
                          {"min_gain_slack", ColumnType::real},
                          {"min_gain_slack_relative", ColumnType::real},
                          {"min_gain_slack_relative_with_q", ColumnType::real}},
                         st);
    add(t,
        {static_cast<std::int64_t>(s.instances), s.max_cov_residual, s.min_w_slack, s.min_w_slack_relative,
         s.min_gain_slack, s.min_gain_slack_relative, s.min_gain_slack_relative_with_q},
        st);
    res.tables.push_back({"lemma", std::move(t)});
    return res;
}

std::string seed_list_tag(const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() == 1) return "seed" + std::to_string(seeds.front());
    bool contiguous = true;
    for (std::size_t i = 1; i < seeds.size(); ++i) contiguous = contiguous && seeds[i] == seeds[i - 1] + 1;
    if (contiguous) return "seeds" + std::to_string(seeds.front()) + "-" + std::to_string(seeds.back());
    std::string joined;
    for (auto s : seeds) joined += std::to_string(s) + ",";
    char buf[9];
    std::snprintf(buf, sizeof buf, "%08llx", static_cast<unsigned long long>(fnv1a64(joined) & 0xffffffffULL));
    return "seeds" + std::to_string(seeds.size()) + "x" + buf;
}

}  // namespace

const MethodMetrics& SeedResult::method(const std::string& name) const {
    for (const auto& m : methods)
        if (m.method == name) return m;
    throw ConfigError("no method '" + name + "' in seed result");
}

double ExperimentResult::mean(const std::string& method, double MethodMetrics::*field) const {
    double s = 0;
    for (const auto& r : seeds) s += r.method(method).*field;
    return s / static_cast<double>(seeds.size());
}

double ExperimentResult::mean_scalar(const std::string& name) const {
    double s = 0;
    for (const auto& r : seeds) {
        const auto it = r.scalars.find(name);
        if (it == r.scalars.end()) throw ConfigError("no scalar '" + name + "' in seed result");
        s += it->second;
    }
    return s / static_cast<double>(seeds.size());
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed) {
    const Stamp st{cfg.hash(), seed};
    SeedResult res;
    switch (cfg.experiment) {
        case ExperimentKind::ode_auto: res = run_ode(cfg, seed, st); break;
        case ExperimentKind::fourier: res = run_fourier(cfg, seed, st); break;
        case ExperimentKind::nonauto_linear: res = run_nonauto(cfg, seed, st); break;
        case ExperimentKind::allen_cahn: res = run_allen_cahn(cfg, seed, st); break;
        case ExperimentKind::lemma_sweep: res = run_lemma(cfg, seed, st); break;
    }
    res.seed = seed;
    if (!res.scalars.empty()) res.tables.push_back({"scalars", scalars_table(res.scalars, st)});
    return res;
}

unsigned worker_slots() {
    if (const char* env = std::getenv("KF_DMD_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || v < 1) throw ConfigError("KF_DMD_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    ExperimentResult out{cfg, cfg.hash(), {}, {}};
    const std::size_t count = cfg.seeds.size();
    std::vector<SeedResult> results(count);
    std::vector<std::exception_ptr> errors(count);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < count; i = next++) {
            try {
                results[i] = run_seed(cfg, cfg.seeds[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const unsigned slots = std::min<unsigned>(worker_slots(), static_cast<unsigned>(count));
    if (slots <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < slots; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    out.seeds = std::move(results);

    // Deterministic reduce in sorted seed order.
    const Stamp none{out.hash, 0};
    if (!out.seeds.front().methods.empty()) {
        Table all = make_table("metrics_all",
                               {{"method", ColumnType::text},
                                {"eigenvalue_error", ColumnType::real},
                                {"reconstruction_rmse", ColumnType::real},
                                {"prediction_rmse", ColumnType::real}},
                               none);
        for (const auto& r : out.seeds) {
            const Stamp st{out.hash, r.seed};
            for (const auto& m : r.methods)
                add(all, {m.method, m.eigenvalue_error, m.reconstruction_rmse, m.prediction_rmse}, st);
        }
        out.summary.push_back({"metrics_all", std::move(all)});

        Schema ms{"metrics_mean",
                  {{"method", ColumnType::text},
                   {"seeds", ColumnType::integer},
                   {"eigenvalue_error", ColumnType::real},
                   {"reconstruction_rmse", ColumnType::real},
                   {"prediction_rmse", ColumnType::real},
                   {"config_hash", ColumnType::text},
                   {"seed", ColumnType::integer}}};
        Table mean(std::move(ms));
        for (const auto& m : out.seeds.front().methods)
            mean.add_row({m.method, static_cast<std::int64_t>(count),
                          out.mean(m.method, &MethodMetrics::eigenvalue_error),
                          out.mean(m.method, &MethodMetrics::reconstruction_rmse),
                          out.mean(m.method, &MethodMetrics::prediction_rmse), out.hash, std::monostate{}});
        out.summary.push_back({"metrics_mean", std::move(mean)});
    }
    if (!out.seeds.front().scalars.empty()) {
        Table all = make_table("scalars_all", {{"name", ColumnType::text}, {"value", ColumnType::real}}, none);
        for (const auto& r : out.seeds) {
            const Stamp st{out.hash, r.seed};
            for (const auto& [k, v] : r.scalars) add(all, {k, v}, st);
        }
        out.summary.push_back({"scalars_all", std::move(all)});
    }
    return out;
}

std::string output_name(const ExperimentConfig& cfg, const std::string& hash, const std::string& table,
                        const std::string& seed_tag, const std::string& ext) {
    return experiment_name(cfg.experiment) + "_" + table + "_" + seed_tag + "_" + hash.substr(0, 8) + "." + ext;
}

std::vector<std::filesystem::path> write_outputs(const ExperimentResult& result) {
    const ExperimentConfig& cfg = result.config;
    const std::string ext = format_name(cfg.format);
    std::vector<std::filesystem::path> written;
    auto put = [&](const Table& t, const std::string& name, const std::string& tag, OutputFormat fmt) {
        const auto path = cfg.out / output_name(cfg, result.hash, name, tag, format_name(fmt));
        emit_table(t, path, fmt);
        written.push_back(path);
    };
    // The snapshot lives in the output directory, so it does not record it.
    nlohmann::json snapshot = cfg.resolved;
    snapshot.erase("out");
    write_file(cfg.out / output_name(cfg, result.hash, "config", "seed-any", "json"), snapshot.dump(2) + "\n");
    written.push_back(cfg.out / output_name(cfg, result.hash, "config", "seed-any", "json"));
    for (const auto& r : result.seeds) {
        const std::string tag = "seed" + std::to_string(r.seed);
        for (const auto& nt : r.tables) put(nt.table, nt.name, tag, cfg.format);
        for (const auto& track : r.tracks) {
            // Plot data is long-format CSV regardless of the table format.
            put(plot_table(track, {{"config_hash", result.hash}, {"seed", static_cast<std::int64_t>(r.seed)}}),
                track.kind, tag, OutputFormat::csv);
            if (cfg.svg) {
                const auto path = cfg.out / output_name(cfg, result.hash, track.kind, tag, "svg");
                write_file(path, render_svg(track));
                written.push_back(path);
            }
        }
    }
    const std::string tag = seed_list_tag(cfg.seeds);
    for (const auto& nt : result.summary) put(nt.table, nt.name, tag, cfg.format);
    // The lemma report is always available as JSON.
    if (cfg.experiment == ExperimentKind::lemma_sweep && cfg.format != OutputFormat::json)
        for (const auto& r : result.seeds)
            for (const auto& nt : r.tables)
                if (nt.name == "lemma") put(nt.table, "lemma_report", "seed" + std::to_string(r.seed), OutputFormat::json);
    return written;
}

}  // namespace kfdmd
