#include <doctest.h>

#include <cmath>

#include "fedvol/privacy.hpp"
#include "fedvol/rng.hpp"

using namespace fedvol;
using namespace fedvol::privacy;

TEST_CASE("clip_l2: scaling and no-op branches") {
    Eigen::VectorXd big(2);
    big << 2.0, 0.0; // norm 2
    const Eigen::VectorXd clipped = clip_l2(big, 1.0);
    CHECK(clipped.norm() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(clipped(0) == doctest::Approx(1.0).epsilon(1e-12));

    Eigen::VectorXd small(3);
    small << 0.3, 0.0, 0.4; // norm 0.5
    const Eigen::VectorXd same = clip_l2(small, 1.0);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(same(i) == small(i));

    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(4);
    CHECK(clip_l2(zero, 0.5) == zero);
}

TEST_CASE("clip_l2: idempotent bitwise, direction preserving") {
    Rng rng(1);
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd x(16);
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal() * 10.0;
        const double c = rng.uniform(0.1, 5.0);
        const Eigen::VectorXd once = clip_l2(x, c);
        const Eigen::VectorXd twice = clip_l2(once, c);
        for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(twice(i) == once(i));
        CHECK(once.norm() <= c * (1.0 + 1e-12));

        // Nonnegative scalar multiple of the input.
        const double ratio = once.norm() / x.norm();
        CHECK((once - ratio * x).cwiseAbs().maxCoeff() < 1e-12 * (1.0 + x.cwiseAbs().maxCoeff()));
    }

    Eigen::VectorXd bad(2);
    bad << 1.0, std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(clip_l2(bad, 1.0), ValidationError);
    CHECK_THROWS_AS(clip_l2(Eigen::VectorXd::Zero(2), 0.0), ParameterError);
}

TEST_CASE("add_gaussian: zero sigma is bitwise identity, noise scale checks out") {
    Rng rng(2);
    Eigen::VectorXd x(100);
    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = rng.normal();

    const Eigen::VectorXd same = add_gaussian(x, 0.0, 123);
    for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(same(i) == x(i));

    const Eigen::VectorXd a = add_gaussian(x, 0.5, 123);
    const Eigen::VectorXd b = add_gaussian(x, 0.5, 123);
    for (Eigen::Index i = 0; i < x.size(); ++i) CHECK(a(i) == b(i));
    CHECK(add_gaussian(x, 0.5, 124) != a);

    // Sample standard deviation of the injected noise.
    const Eigen::VectorXd base = Eigen::VectorXd::Zero(10000);
    const Eigen::VectorXd noisy = add_gaussian(base, 0.1, 55);
    const double mean = noisy.mean();
    const double var = (noisy.array() - mean).square().sum() / (noisy.size() - 1.0);
    const double sd = std::sqrt(var);
    CHECK(sd >= 0.097);
    CHECK(sd <= 0.103);
}

TEST_CASE("dp_process") {
    Rng rng(3);
    Eigen::VectorXd global(32), update(32);
    for (Eigen::Index i = 0; i < 32; ++i) {
        global(i) = rng.normal();
        update(i) = global(i) + 0.01 * rng.normal();
    }

    DpConfig noop;
    noop.clip_norm = std::numeric_limits<double>::infinity();
    noop.noise_std = 0.0;
    noop.seed = 9;
    const Eigen::VectorXd same = dp_process(global, update, noop, 1, 0);
    for (Eigen::Index i = 0; i < 32; ++i) CHECK(same(i) == update(i)); // bitwise

    // Tiny clip bound: the processed update collapses onto the global.
    DpConfig tight;
    tight.clip_norm = 1e-9;
    tight.noise_std = 0.0;
    tight.seed = 9;
    const Eigen::VectorXd collapsed = dp_process(global, update, tight, 1, 0);
    CHECK((collapsed - global).norm() == doctest::Approx(1e-9).epsilon(1e-6));

    // Noise streams are decorrelated by round and client but reproducible.
    DpConfig noisy;
    noisy.clip_norm = 1.0;
    noisy.noise_std = 0.5;
    noisy.seed = 9;
    const Eigen::VectorXd r1c0 = dp_process(global, update, noisy, 1, 0);
    const Eigen::VectorXd r1c0_again = dp_process(global, update, noisy, 1, 0);
    for (Eigen::Index i = 0; i < 32; ++i) CHECK(r1c0(i) == r1c0_again(i));
    CHECK(dp_process(global, update, noisy, 2, 0) != r1c0);
    CHECK(dp_process(global, update, noisy, 1, 1) != r1c0);

    Eigen::VectorXd shorter(31);
    shorter.setZero();
    CHECK_THROWS_AS(dp_process(global, shorter, noisy, 1, 0), ValidationError);
}
