#pragma once

#include "kfdmd/core.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace kfdmd {

struct GroundTruth {
    SnapshotSeries series;  // noise-free
    // Analytic discrete-time spectrum: r x 1 for autonomous systems,
    // r x (m+1) per-step for non-autonomous ones, empty when unknown.
    Eigen::MatrixXcd eigenvalues;
    std::string description;
};

// --- Two-variable ODE lifted onto (x1, x2, x1^2) ---------------------------

// Generator A of the lifted linear system.
Eigen::Matrix3d lifted_generator(double mu, double lam);

GroundTruth gen_ode_auto(double mu, double lam, double dt, Index steps, const Eigen::Vector2d& x0);

// --- Sparse Fourier-domain linear system ------------------------------------

struct FourierMode {
    int i;             // wavenumber index along x
    int j;             // wavenumber index along y
    double damping;    // d = Re(lambda)
    double frequency;  // omega = Im(lambda)
    double amplitude;  // initial coefficient
};

struct FourierSystemSpec {
    std::vector<FourierMode> modes;
    // The five-mode system with positions, rates and initial values of the
    // reference experiment.
    static FourierSystemSpec reference();
};

// Five complex coefficients evolve as a e^{(d + i omega) t}; every other
// coefficient receives fresh circular complex N(0, sigma_bg^2) noise at each
// snapshot. Snapshots are Re of the unnormalized inverse DFT, flattened with
// x fastest. The analytic spectrum lists e^{(d +- i omega) dt} per mode.
GroundTruth gen_fourier_system(const FourierSystemSpec& spec, Index nx, Index ny, double sigma_bg, double dt,
                               Index steps, std::uint64_t seed);

// Spatial field Re/Im of e^{2 pi i (I x/nx + J y/ny)} / 2 flattened like the
// snapshots: the mode attached to e^{(d + i omega) dt} for unit amplitude.
Eigen::VectorXcd fourier_mode_field(int i, int j, Index nx, Index ny);

// Standard deviation of the spatial noise produced by sigma_bg.
double fourier_background_std(Index nx, Index ny, Index n_modes, double sigma_bg);

// --- Linear non-autonomous rotation with modulated growth -------------------

struct NonautoLinearSpec {
    double omega = 2.0;          // rotation rate
    double freq_divisor = 1.0;   // growth rate sigma(t) = cos(t / divisor)
};

// alpha(t, s) = integral of sigma, beta(t, s) = integral of omega.
double nonauto_alpha(const NonautoLinearSpec& spec, double t, double s);
double nonauto_beta(const NonautoLinearSpec& spec, double t, double s);
// Fundamental matrix M(t, s).
Eigen::Matrix2d nonauto_fundamental(const NonautoLinearSpec& spec, double t, double s);

// Per-step spectrum: column k holds exp((alpha(t_k,0) +- i beta(t_k,0)) / k),
// the k-th root of the eigenvalues of M(t_k, 0) on the continuous phase
// branch; column 0 holds the k -> 0 limit exp((sigma(0) +- i omega) dt).
GroundTruth gen_nonauto_linear(const NonautoLinearSpec& spec, double dt, Index steps, const Eigen::Vector2d& x0);

// --- Allen-Cahn on (0, 2 pi)^2 -----------------------------------------------

struct AllenCahnSpec {
    double theta = 0.1;
    std::function<double(double)> mu = [](double) { return 1.0; };
    Index nx = 50;
    Index ny = 50;
    double dt = 0.05;
    double t_end = 5.0;
    // Initial condition; default 0.05 sin x sin y.
    std::function<double(double, double)> u0 = [](double x, double y) { return 0.05 * std::sin(x) * std::sin(y); };
};

// Grid nodes (i dx, j dy), i = 0..nx, j = 0..ny, flattened with i fastest.
// u = 0 on the x = 0 and y = 0 edges (corners included), zero one-sided
// normal difference on the x = 2 pi and y = 2 pi edges. Crank-Nicolson on
// theta Laplacian - mu(t) u, explicit mu(t) u^3.
GroundTruth gen_allen_cahn(const AllenCahnSpec& spec);

inline Index allen_cahn_index(Index i, Index j, Index nx) { return j * (nx + 1) + i; }

// --- Noise ------------------------------------------------------------------

SnapshotSeries add_noise(const SnapshotSeries& clean, double sigma, std::uint64_t seed);
inline SnapshotSeries add_noise(const GroundTruth& truth, double sigma, std::uint64_t seed) {
    return add_noise(truth.series, sigma, seed);
}

}  // namespace kfdmd
