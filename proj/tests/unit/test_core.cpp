#include "doctest.h"
#include "helpers.hpp"

#include "kfdmd/core.hpp"
#include "kfdmd/error.hpp"
#include "kfdmd/random.hpp"
#include "kfdmd/systems.hpp"

#include <unsupported/Eigen/MatrixFunctions>

using namespace kfdmd;

TEST_CASE("data matrices split the series by one column") {
    Eigen::MatrixXd v(2, 2);
    v << 1, 2, 3, 4;
    auto [y0, y1] = build_data_matrices(SnapshotSeries(v, 1.0));
    CHECK(y0 == v.col(0));
    CHECK(y1 == v.col(1));

    Eigen::MatrixXd c = Eigen::MatrixXd::Constant(3, 5, 2.5);
    auto [a, b] = build_data_matrices(SnapshotSeries(c, 0.1));
    CHECK(a == b);

    const auto truth = gen_ode_auto(-0.01, -0.5, 1.0, 100, Eigen::Vector2d(1, 2));
    auto [p, q] = build_data_matrices(truth.series);
    CHECK(p.rows() == 3);
    CHECK(p.cols() == 100);
    CHECK(q.cols() == 100);
    CHECK(p.rightCols(99) == q.leftCols(99));
}

TEST_CASE("snapshot series rejects bad input") {
    CHECK_THROWS_AS(SnapshotSeries(Eigen::MatrixXd::Zero(2, 1), 1.0), ConfigError);
    CHECK_THROWS_AS(SnapshotSeries(Eigen::MatrixXd::Zero(2, 3), 0.0), ConfigError);
    Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(2, 3);
    bad(1, 1) = std::nan("");
    CHECK_THROWS_AS(SnapshotSeries(bad, 1.0), ConfigError);
}

TEST_CASE("flatten and unflatten round trip exactly") {
    Stream rng(7, StreamTag::system);
    for (int trial = 0; trial < 1000; ++trial) {
        const Index r = 1 + static_cast<Index>(rng.uniform() * 4), d = 1 + static_cast<Index>(rng.uniform() * 6);
        Eigen::MatrixXcd modes(d, r);
        for (Index j = 0; j < r; ++j)
            for (Index i = 0; i < d; ++i) modes(i, j) = cplx(rng.normal(), rng.normal());
        Eigen::VectorXcd lam(r), b(r);
        for (Index i = 0; i < r; ++i) lam(i) = cplx(rng.normal(), rng.normal()), b(i) = cplx(rng.normal(), rng.normal());
        const SpectralParams p(modes, lam, b);
        const Eigen::VectorXd theta = p.flatten();
        REQUIRE(theta.size() == 2 * r * (d + 2));
        const SpectralParams q = SpectralParams::unflatten(theta, r, d);
        CHECK(q.modes() == modes);
        CHECK(q.eigenvalues() == lam);
        CHECK(q.amplitudes() == b);
    }
}

TEST_CASE("flattened layout interleaves real and imaginary parts") {
    Eigen::MatrixXcd modes(1, 1);
    modes(0, 0) = cplx(1, 2);
    const SpectralParams p(modes, Eigen::VectorXcd::Constant(1, cplx(3, 4)), Eigen::VectorXcd::Constant(1, cplx(5, 6)));
    Eigen::VectorXd expect(6);
    expect << 1, 2, 3, 4, 5, 6;
    CHECK(p.flatten() == expect);
    CHECK(SpectralParams::eigenvalue_offset(1, 1) == 2);
    CHECK(SpectralParams::amplitude_offset(1, 1) == 4);
}

TEST_CASE("reconstruct") {
    Eigen::MatrixXcd e1 = Eigen::MatrixXcd::Zero(3, 1);
    e1(0, 0) = 1.0;
    const SpectralParams fixed(e1, Eigen::VectorXcd::Ones(1), Eigen::VectorXcd::Ones(1));
    for (Index k : {0, 1, 17, 1000}) CHECK(reconstruct(fixed, k) == e1.real());

    Stream rng(3, StreamTag::system);
    Eigen::MatrixXcd modes(4, 2);
    for (Index j = 0; j < 2; ++j)
        for (Index i = 0; i < 4; ++i) modes(i, j) = cplx(rng.normal(), rng.normal());
    Eigen::VectorXcd lam(2), b(2);
    lam << cplx(0.9, 0.1), cplx(0.5, -0.2);
    b << cplx(1, 1), cplx(-2, 0.5);
    const SpectralParams p(modes, lam, b);
    CHECK((reconstruct(p, 0) - (modes * b).real()).norm() < 1e-14);

    // Real parameters against plain real arithmetic.
    Eigen::MatrixXd rm = rng.normal_matrix(3, 2);
    Eigen::Vector2d rl(0.95, -0.7), rb(1.5, -0.25);
    const SpectralParams real(rm.cast<cplx>(), rl.cast<cplx>(), rb.cast<cplx>());
    for (Index k : {0, 1, 5, 40}) {
        const Eigen::VectorXd direct = rm * (rl.array().pow(static_cast<double>(k)) * rb.array()).matrix();
        CHECK((reconstruct(real, k) - direct).norm() <= 1e-14 * std::max(1.0, direct.norm()));
    }

    CHECK_THROWS_AS(reconstruct(p, -1), ConfigError);
    const SpectralParams big(e1, Eigen::VectorXcd::Constant(1, 10.0), Eigen::VectorXcd::Ones(1));
    CHECK_THROWS_AS(reconstruct(big, 400), RangeError);
}

TEST_CASE("reconstruct with the true lifted ODE triple matches the matrix exponential") {
    const double mu = -0.01, lam = -0.5;
    const Eigen::Matrix3d a = lifted_generator(mu, lam);
    Eigen::EigenSolver<Eigen::Matrix3d> es(a.exp());
    const Eigen::Vector3d y0(1.0, 2.0, 1.0);
    const Eigen::VectorXcd b = es.eigenvectors().partialPivLu().solve(y0.cast<cplx>());
    const SpectralParams p(es.eigenvectors(), es.eigenvalues(), b);
    for (Index k : {0, 1, 10, 50, 100}) {
        const Eigen::Vector3d oracle = (a * static_cast<double>(k)).exp() * y0;
        CHECK((reconstruct(p, k) - oracle).norm() < 1e-10);
    }
}

TEST_CASE("delay stack") {
    Eigen::MatrixXd v(2, 3);
    v << 1, 2, 3, 4, 5, 6;
    const SnapshotSeries s(v, 1.0);
    CHECK(delay_stack(s, DelayWindow(0, 1)) == v.col(1));
    Eigen::VectorXd all(6);
    all << 1, 4, 2, 5, 3, 6;
    CHECK(delay_stack(s, DelayWindow(2, 2)) == all);
    Eigen::VectorXd tail(4);
    tail << 2, 5, 3, 6;
    CHECK(delay_stack(s, DelayWindow(1, 2)) == tail);
    CHECK(delay_stack(s, DelayWindow(1, 1)).tail(2) == v.col(1));
    CHECK_THROWS_AS(DelayWindow(2, 1), ConfigError);
    CHECK_THROWS_AS(delay_stack(s, DelayWindow(0, 3)), ConfigError);
}

TEST_CASE("rmse") {
    Eigen::MatrixXd a = Eigen::MatrixXd::Random(3, 4);
    CHECK(rmse(a, a) == 0.0);
    Eigen::MatrixXd x(2, 1), z = Eigen::MatrixXd::Zero(2, 1);
    x << 3, 4;
    CHECK(rmse(x, z) == doctest::Approx(5.0));
    Eigen::MatrixXd d = Eigen::MatrixXd::Identity(2, 2);
    CHECK(rmse(d, Eigen::MatrixXd::Zero(2, 2)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(rmse(a, Eigen::MatrixXd::Zero(3, 3)), ConfigError);

    Stream rng(11, StreamTag::system);
    for (int t = 0; t < 50; ++t) {
        const Eigen::MatrixXd p = rng.normal_matrix(3, 5), q = rng.normal_matrix(3, 5), w = rng.normal_matrix(3, 5);
        CHECK(std::abs(rmse(p, q) - rmse(q, p)) <= 1e-12);
        CHECK(rmse(p, w) <= rmse(p, q) + rmse(q, w) + 1e-12);
    }
}

TEST_CASE("noise spec") {
    const NoiseSpec a = NoiseSpec::autonomous(0.1);
    CHECK(a.q_is_zero());
    CHECK(a.q_matrix(4).isZero());
    CHECK(a.q_factor(4).size() == 0);
    const NoiseSpec iso = NoiseSpec::isotropic(0.1, 0.25);
    CHECK(iso.q_matrix(3) == 0.25 * Eigen::MatrixXd::Identity(3, 3));
    Eigen::MatrixXd q(2, 2);
    q << 2, 1, 1, 2;
    const NoiseSpec dense = NoiseSpec::dense(1.0, q);
    const Eigen::MatrixXd l = dense.q_factor(2);
    CHECK((l * l.transpose() - q).norm() < 1e-12);
    Eigen::MatrixXd asym = q;
    asym(0, 1) = 0.5;
    CHECK_THROWS_AS(NoiseSpec::dense(1.0, asym), ConfigError);
    Eigen::MatrixXd indef(2, 2);
    indef << 1, 2, 2, 1;
    CHECK_THROWS_AS(NoiseSpec::dense(1.0, indef), ConfigError);
    CHECK_THROWS_AS(NoiseSpec::autonomous(-1.0), ConfigError);
}

TEST_CASE("integer power") {
    CHECK(int_power(cplx(2, 0), 10) == cplx(1024, 0));
    CHECK(int_power(cplx(0, 1), 4) == cplx(1, 0));
    CHECK(int_power(cplx(0.5, 0.5), 0) == cplx(1, 0));
    CHECK_THROWS_AS(int_power(cplx(1e10, 0), 100), RangeError);
}

TEST_CASE("substreams are keyed, not ordered") {
    Stream a(1, StreamTag::prior, 2, 3), b(1, StreamTag::prior, 2, 3), c(1, StreamTag::prior, 3, 2);
    const double x = a.normal();
    CHECK(x == b.normal());
    CHECK(x != c.normal());
    Stream d(1, StreamTag::observation_noise, 2, 3);
    CHECK(x != d.normal());
}
