#include "kfdmd/systems.hpp"

#include "kfdmd/error.hpp"
#include "kfdmd/random.hpp"

#include <Eigen/Sparse>
#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <numbers>
#include <set>
#include <string>
#include <utility>

namespace kfdmd {

Eigen::Matrix3d lifted_generator(double mu, double lam) {
    Eigen::Matrix3d a;
    a << mu, 0.0, 0.0,
         0.0, lam, -lam,
         0.0, 0.0, 2.0 * mu;
    return a;
}

GroundTruth gen_ode_auto(double mu, double lam, double dt, Index steps, const Eigen::Vector2d& x0) {
    if (!(dt > 0.0)) throw ConfigError("ode generator needs dt > 0");
    if (steps < 1) throw ConfigError("ode generator needs at least one step");
    const Eigen::Matrix3d step = (lifted_generator(mu, lam) * dt).exp();
    Eigen::MatrixXd y(3, steps + 1);
    y.col(0) << x0(0), x0(1), x0(0) * x0(0);
    for (Index k = 0; k < steps; ++k) y.col(k + 1) = step * y.col(k);
    if (!y.allFinite()) throw NumericalError("ode trajectory is not finite");

    Eigen::MatrixXcd eig(3, 1);
    eig << std::exp(mu * dt), std::exp(2.0 * mu * dt), std::exp(lam * dt);
    return {SnapshotSeries(std::move(y), dt, 0.0), eig, "lifted two-variable ODE (x1, x2, x1^2)"};
}

FourierSystemSpec FourierSystemSpec::reference() {
    return {{{3, 2, -0.0755, 12.0967, 0.2954},
             {5, 2, -0.0839, 11.0315, -0.7263},
             {7, 9, -0.0414, 8.1959, -0.4689},
             {3, 5, -0.0175, 6.2861, 0.3091},
             {9, 8, -0.0702, 1.6272, 0.3857}}};
}

namespace {

// F(p, I) = exp(2 pi i I p / n).
Eigen::MatrixXcd dft_synthesis(Index n) {
    Eigen::MatrixXcd f(n, n);
    for (Index p = 0; p < n; ++p)
        for (Index i = 0; i < n; ++i) {
            const double ang = 2.0 * std::numbers::pi * static_cast<double>((i * p) % n) / static_cast<double>(n);
            f(p, i) = cplx(std::cos(ang), std::sin(ang));
        }
    return f;
}

}  // namespace

GroundTruth gen_fourier_system(const FourierSystemSpec& spec, Index nx, Index ny, double sigma_bg, double dt,
                               Index steps, std::uint64_t seed) {
    if (nx < 2 || ny < 2) throw ConfigError("fourier grid must be at least 2x2");
    if (!(dt > 0.0)) throw ConfigError("fourier generator needs dt > 0");
    if (steps < 1) throw ConfigError("fourier generator needs at least one step");
    if (!(sigma_bg >= 0.0)) throw ConfigError("background noise must be nonnegative");
    std::set<std::pair<int, int>> seen;
    for (const auto& m : spec.modes) {
        if (m.i < 0 || m.j < 0 || m.i >= nx || m.j >= ny)
            throw ConfigError("fourier mode (" + std::to_string(m.i) + ", " + std::to_string(m.j) + ") outside the " +
                              std::to_string(nx) + "x" + std::to_string(ny) + " grid");
        if (!seen.emplace(m.i, m.j).second)
            throw ConfigError("duplicate fourier mode position (" + std::to_string(m.i) + ", " + std::to_string(m.j) + ")");
    }

    const Eigen::MatrixXcd fx = dft_synthesis(nx);
    const Eigen::MatrixXcd fy = dft_synthesis(ny);
    const double part_std = sigma_bg / std::sqrt(2.0);
    Eigen::MatrixXd values(nx * ny, steps + 1);
    for (Index k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        Eigen::MatrixXcd coeff = Eigen::MatrixXcd::Zero(nx, ny);
        if (sigma_bg > 0.0) {
            Stream rng(seed, StreamTag::system, static_cast<std::uint64_t>(k));
            for (Index j = 0; j < ny; ++j)
                for (Index i = 0; i < nx; ++i) {
                    const double re = rng.normal();
                    const double im = rng.normal();
                    coeff(i, j) = part_std * cplx(re, im);
                }
        }
        for (const auto& m : spec.modes)
            coeff(m.i, m.j) = m.amplitude * std::exp(cplx(m.damping, m.frequency) * t);
        const Eigen::MatrixXd field = (fx * coeff * fy.transpose()).real();
        values.col(k) = Eigen::Map<const Eigen::VectorXd>(field.data(), nx * ny);
    }

    Eigen::MatrixXcd eig(2 * static_cast<Index>(spec.modes.size()), 1);
    for (std::size_t q = 0; q < spec.modes.size(); ++q) {
        const auto& m = spec.modes[q];
        eig(2 * static_cast<Index>(q), 0) = std::exp(cplx(m.damping, m.frequency) * dt);
        eig(2 * static_cast<Index>(q) + 1, 0) = std::exp(cplx(m.damping, -m.frequency) * dt);
    }
    return {SnapshotSeries(std::move(values), dt, 0.0), eig, "sparse Fourier-domain linear system"};
}

Eigen::VectorXcd fourier_mode_field(int i, int j, Index nx, Index ny) {
    Eigen::VectorXcd out(nx * ny);
    for (Index q = 0; q < ny; ++q)
        for (Index p = 0; p < nx; ++p) {
            const double ang = 2.0 * std::numbers::pi *
                               (static_cast<double>((i * p) % nx) / static_cast<double>(nx) +
                                static_cast<double>((j * q) % ny) / static_cast<double>(ny));
            out(q * nx + p) = 0.5 * cplx(std::cos(ang), std::sin(ang));
        }
    return out;
}

double fourier_background_std(Index nx, Index ny, Index n_modes, double sigma_bg) {
    // Each noisy coefficient contributes Re(z e^{i phi}) with variance sigma_bg^2 / 2.
    return sigma_bg * std::sqrt(static_cast<double>(nx * ny - n_modes) / 2.0);
}

double nonauto_alpha(const NonautoLinearSpec& spec, double t, double s) {
    const double q = spec.freq_divisor;
    return q * (std::sin(t / q) - std::sin(s / q));
}

double nonauto_beta(const NonautoLinearSpec& spec, double t, double s) { return spec.omega * (t - s); }

Eigen::Matrix2d nonauto_fundamental(const NonautoLinearSpec& spec, double t, double s) {
    const double a = std::exp(nonauto_alpha(spec, t, s));
    const double b = nonauto_beta(spec, t, s);
    Eigen::Matrix2d m;
    m << std::cos(b), std::sin(b),
         -std::sin(b), std::cos(b);
    return a * m;
}

GroundTruth gen_nonauto_linear(const NonautoLinearSpec& spec, double dt, Index steps, const Eigen::Vector2d& x0) {
    if (!(dt > 0.0)) throw ConfigError("non-autonomous generator needs dt > 0");
    if (steps < 1) throw ConfigError("non-autonomous generator needs at least one step");
    if (!(spec.freq_divisor > 0.0)) throw ConfigError("frequency divisor must be > 0");
    Eigen::MatrixXd x(2, steps + 1);
    Eigen::MatrixXcd eig(2, steps + 1);
    for (Index k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        x.col(k) = nonauto_fundamental(spec, t, 0.0) * x0;
        if (k == 0) {
            eig(0, 0) = std::exp(cplx(std::cos(0.0), spec.omega) * dt);
            eig(1, 0) = std::exp(cplx(std::cos(0.0), -spec.omega) * dt);
        } else {
            // beta accumulates continuously, so no principal-branch logarithm
            // is involved in the k-th root.
            const double kk = static_cast<double>(k);
            const cplx expo(nonauto_alpha(spec, t, 0.0), nonauto_beta(spec, t, 0.0));
            eig(0, k) = std::exp(expo / kk);
            eig(1, k) = std::exp(std::conj(expo) / kk);
        }
    }
    return {SnapshotSeries(std::move(x), dt, 0.0), eig, "linear non-autonomous rotation"};
}

namespace {

// theta * 5-point Laplacian on the unknown nodes i = 1..nx-1, j = 1..ny-1,
// with the Dirichlet and eliminated Neumann nodes folded in.
Eigen::SparseMatrix<double> unknown_laplacian(Index nx, Index ny, double h_x, double h_y) {
    const Index mx = nx - 1, my = ny - 1, n = mx * my;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(5 * n));
    const double cx = 1.0 / (h_x * h_x), cy = 1.0 / (h_y * h_y);
    auto id = [mx](Index i, Index j) { return (j - 1) * mx + (i - 1); };
    for (Index j = 1; j <= my; ++j)
        for (Index i = 1; i <= mx; ++i) {
            double diag = 0.0;
            // west: i-1 == 0 is Dirichlet (zero) otherwise an unknown
            diag -= cx;
            if (i > 1) trip.emplace_back(id(i, j), id(i - 1, j), cx);
            // east: node nx mirrors node nx-1
            if (i < mx) {
                diag -= cx;
                trip.emplace_back(id(i, j), id(i + 1, j), cx);
            }
            diag -= cy;
            if (j > 1) trip.emplace_back(id(i, j), id(i, j - 1), cy);
            if (j < my) {
                diag -= cy;
                trip.emplace_back(id(i, j), id(i, j + 1), cy);
            }
            trip.emplace_back(id(i, j), id(i, j), diag);
        }
    Eigen::SparseMatrix<double> lap(n, n);
    lap.setFromTriplets(trip.begin(), trip.end());
    return lap;
}

Eigen::VectorXd to_grid(const Eigen::VectorXd& unknowns, Index nx, Index ny) {
    const Index mx = nx - 1;
    Eigen::VectorXd g = Eigen::VectorXd::Zero((nx + 1) * (ny + 1));
    for (Index j = 1; j <= ny - 1; ++j)
        for (Index i = 1; i <= mx; ++i) g(allen_cahn_index(i, j, nx)) = unknowns((j - 1) * mx + (i - 1));
    // Neumann edges copy their inner neighbours; Dirichlet edges stay zero.
    for (Index j = 1; j <= ny - 1; ++j) g(allen_cahn_index(nx, j, nx)) = g(allen_cahn_index(nx - 1, j, nx));
    for (Index i = 1; i <= nx; ++i) g(allen_cahn_index(i, ny, nx)) = g(allen_cahn_index(i, ny - 1, nx));
    return g;
}

}  // namespace

GroundTruth gen_allen_cahn(const AllenCahnSpec& spec) {
    if (spec.nx < 8 || spec.ny < 8) throw ConfigError("Allen-Cahn grid needs nx, ny >= 8");
    if (!(spec.dt > 0.0) || !(spec.t_end > 0.0)) throw ConfigError("Allen-Cahn needs dt > 0 and t_end > 0");
    if (!(spec.theta >= 0.0)) throw ConfigError("Allen-Cahn diffusion coefficient must be nonnegative");
    if (!spec.mu || !spec.u0) throw ConfigError("Allen-Cahn needs mu(t) and u0(x, y)");

    const Index nx = spec.nx, ny = spec.ny;
    const double two_pi = 2.0 * std::numbers::pi;
    const double hx = two_pi / static_cast<double>(nx), hy = two_pi / static_cast<double>(ny);
    const auto steps = static_cast<Index>(std::llround(spec.t_end / spec.dt));
    if (steps < 1) throw ConfigError("Allen-Cahn needs t_end >= dt");

    const Index mx = nx - 1, my = ny - 1, n = mx * my;
    Eigen::VectorXd u(n);
    for (Index j = 1; j <= my; ++j)
        for (Index i = 1; i <= mx; ++i)
            u((j - 1) * mx + (i - 1)) = spec.u0(static_cast<double>(i) * hx, static_cast<double>(j) * hy);

    const Eigen::SparseMatrix<double> lap = spec.theta * unknown_laplacian(nx, ny, hx, hy);
    Eigen::SparseMatrix<double> eye(n, n);
    eye.setIdentity();

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
    double factored_mu = std::numeric_limits<double>::quiet_NaN();
    Eigen::SparseMatrix<double> rhs_op;

    Eigen::MatrixXd values((nx + 1) * (ny + 1), steps + 1);
    values.col(0) = to_grid(u, nx, ny);
    for (Index k = 0; k < steps; ++k) {
        const double t_mid = (static_cast<double>(k) + 0.5) * spec.dt;
        const double mu = spec.mu(t_mid);
        if (!(mu == factored_mu)) {
            Eigen::SparseMatrix<double> linear = lap - mu * eye;
            Eigen::SparseMatrix<double> lhs = eye - 0.5 * spec.dt * linear;
            rhs_op = eye + 0.5 * spec.dt * linear;
            solver.compute(lhs);
            if (solver.info() != Eigen::Success) throw NumericalError("Allen-Cahn system factorization failed");
            factored_mu = mu;
        }
        const Eigen::VectorXd rhs = rhs_op * u + spec.dt * mu * u.array().cube().matrix();
        u = solver.solve(rhs);
        if (!u.allFinite() || u.cwiseAbs().maxCoeff() > 1e3)
            throw NumericalError("Allen-Cahn solution blew up at t=" + std::to_string((k + 1) * spec.dt) +
                                 "; try a smaller dt");
        values.col(k + 1) = to_grid(u, nx, ny);
    }
    return {SnapshotSeries(std::move(values), spec.dt, 0.0), Eigen::MatrixXcd(), "Allen-Cahn on (0, 2pi)^2"};
}

SnapshotSeries add_noise(const SnapshotSeries& clean, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be nonnegative");
    if (sigma == 0.0) return clean;
    Eigen::MatrixXd noisy = clean.values();
    for (Index k = 0; k < noisy.cols(); ++k) {
        Stream rng(seed, StreamTag::data_noise, static_cast<std::uint64_t>(k));
        noisy.col(k) += sigma * rng.normal_vector(noisy.rows());
    }
    return SnapshotSeries(std::move(noisy), clean.dt(), clean.t0());
}

}  // namespace kfdmd
