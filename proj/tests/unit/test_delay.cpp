#include "doctest.h"
#include "helpers.hpp"

#include "kfdmd/delay.hpp"
#include "kfdmd/error.hpp"
#include "kfdmd/systems.hpp"

#include <limits>

using namespace kfdmd;

namespace {

SnapshotSeries linear_rank_r(Index r, std::uint64_t seed) {
    // d = 6 observations of an r-dimensional linear state.
    Stream rng(seed, StreamTag::system, 3);
    const Eigen::MatrixXd a = testutil::random_stable(r, seed, 0.95);
    const Eigen::MatrixXd z = testutil::linear_trajectory(a, rng.normal_vector(r), 40);
    return SnapshotSeries(rng.normal_matrix(6, r) * z, 0.1);
}

}  // namespace

TEST_CASE("linear data stabilizes at the first comparison") {
    for (Index r : {1, 2, 3}) {
        DelayCriterion c;
        c.rank = r;
        c.relative = false;
        c.epsilon = 1e-8;
        const DelaySelection s = select_delay(linear_rank_r(r, static_cast<std::uint64_t>(r)), c);
        CHECK(s.n == r + 2);
        CHECK_FALSE(s.saturated);
        REQUIRE(s.residuals.size() == 1);
        CHECK(s.residuals[0] < 1e-8);
    }
}

TEST_CASE("infinite threshold returns r+2") {
    const auto truth = gen_ode_auto(-0.01, -0.5, 1.0, 50, Eigen::Vector2d(3, 3));
    const auto noisy = add_noise(truth, 0.1, 0);
    DelayCriterion c;
    c.rank = 2;
    c.epsilon = std::numeric_limits<double>::infinity();
    CHECK(select_delay(noisy, c).n == 4);
}

TEST_CASE("output is nondecreasing as epsilon shrinks and capped by max_n") {
    const auto truth = gen_ode_auto(-0.01, -0.5, 1.0, 80, Eigen::Vector2d(3, 3));
    const auto noisy = add_noise(truth, 0.1, 5);
    for (bool relative : {true, false}) {
        Index prev = 0;
        for (double eps : {1.0, 3e-1, 1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 1e-4, 1e-6}) {
            DelayCriterion c;
            c.rank = 1;
            c.relative = relative;
            c.epsilon = eps;
            c.max_n = 30;
            const DelaySelection s = select_delay(noisy, c);
            CHECK(s.n >= prev);
            CHECK(s.n <= c.max_n);
            if (s.saturated) CHECK(s.n == c.max_n);
            if (!s.saturated && !relative) CHECK(s.residuals.back() <= eps);
            prev = s.n;
        }
    }
}

TEST_CASE("saturation") {
    const auto truth = gen_ode_auto(-0.01, -0.5, 1.0, 80, Eigen::Vector2d(3, 3));
    const auto noisy = add_noise(truth, 0.5, 1);
    DelayCriterion c;
    c.rank = 1;
    c.relative = false;
    c.epsilon = 1e-15;
    c.max_n = 6;
    const DelaySelection s = select_delay(noisy, c);
    CHECK(s.saturated);
    CHECK(s.n == 6);
    for (double e : s.residuals) CHECK(e > 1e-15);
}

TEST_CASE("determinism and errors") {
    const auto noisy = add_noise(gen_ode_auto(-0.01, -0.5, 1.0, 60, Eigen::Vector2d(3, 3)), 0.1, 2);
    DelayCriterion c;
    const auto a = select_delay(noisy, c), b = select_delay(noisy, c);
    CHECK(a.n == b.n);
    CHECK(a.residuals == b.residuals);

    c.rank = 5;
    CHECK_THROWS_AS(select_delay(noisy.slice(0, 6), c), ConfigError);
    DelayCriterion bad;
    bad.epsilon = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = DelayCriterion{};
    bad.rank = 3;
    bad.max_n = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}
