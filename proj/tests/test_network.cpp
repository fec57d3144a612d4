#include <gtest/gtest.h>

#include <sstream>

#include "btntk/data.hpp"
#include "btntk/network.hpp"
#include "oracles.hpp"

using namespace btntk;

TEST(InitGaussian, ZeroVarianceGivesZeroParameters) {
    const auto p = init_gaussian(7, 3, 5, Activation::tanh, 0.0, 1.0, 1);
    EXPECT_TRUE(p.W.isZero(0.0));
    EXPECT_TRUE(p.V.isZero(0.0));
}

TEST(InitGaussian, Deterministic) {
    const auto a = init_gaussian(9, 2, 4, Activation::relu, 1.0, 2.0, 17);
    const auto b = init_gaussian(9, 2, 4, Activation::relu, 1.0, 2.0, 17);
    EXPECT_EQ(a.flatten(), b.flatten());
}

TEST(InitGaussian, WideNetworkEntriesConcentrate) {
    const Index M = 10000, K = 2, d = 3;
    const auto p = init_gaussian(M, K, d, Activation::tanh, 1.0, 1.0, 4);
    const Vec theta = p.flatten();
    const double n = double(theta.size());
    EXPECT_LE(std::abs(theta.mean()), 3.0 / std::sqrt(n));
    EXPECT_NEAR(theta.squaredNorm() / n, 1.0, 0.05);
}

TEST(InitGaussian, FirstLayerScaleMultipliesV) {
    const auto a = init_gaussian(5, 2, 3, Activation::relu, 1.0, 1.0, 8);
    const auto b = init_gaussian(5, 2, 3, Activation::relu, 1.0, 3.0, 8);
    EXPECT_EQ(a.W, b.W);
    EXPECT_LE((3.0 * a.V - b.V).norm(), 1e-14);
}

TEST(Flatten, RoundTripIsExactAndHasCanonicalLayout) {
    const auto p = init_gaussian(4, 3, 5, Activation::tanh, 1.0, 1.0, 2);
    const Vec theta = p.flatten();
    ASSERT_EQ(theta.size(), 4 * (5 + 3));
    EXPECT_EQ(theta(p.w_index(2, 1)), p.W(2, 1));
    EXPECT_EQ(theta(p.v_index(3, 4)), p.V(3, 4));
    const auto q = NetworkParams::unflatten(theta, 4, 3, 5, Activation::tanh);
    EXPECT_EQ(q.flatten(), theta);
    EXPECT_THROW(NetworkParams::unflatten(theta, 4, 3, 4, Activation::tanh), DimensionError);
}

TEST(Forward, ZeroSecondLayerGivesZero) {
    auto p = init_gaussian(6, 3, 4, Activation::tanh, 1.0, 1.0, 3);
    p.W.setZero();
    Vec x = Vec::Random(4).normalized();
    EXPECT_TRUE(forward(p, x).isZero(0.0));
}

TEST(Forward, SingleReluNeuron) {
    NetworkParams p{Mat::Constant(1, 1, 2.0), (Mat(1, 2) << 1.0, 0.0).finished(), Activation::relu};
    const Vec x = (Vec(2) << 1.0, 0.0).finished();
    EXPECT_DOUBLE_EQ(forward(p, x)(0), 2.0);
}

TEST(Forward, MatchesPerNeuronLoop) {
    for (auto act : {Activation::tanh, Activation::relu})
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const auto p = oracle::random_params(13, 3, 6, act, seed);
            const auto data = synthetic_pairs(4, 6, 0.1, seed);
            for (Index n = 0; n < 4; ++n) {
                const Vec x = data.anchors().row(n).transpose();
                EXPECT_LE((forward(p, x) - oracle::forward_loop(p, x)).cwiseAbs().maxCoeff(), 1e-12);
            }
            const Mat batch = forward_batch(p, data.stacked());
            EXPECT_LE((batch.row(5).transpose() - oracle::forward_loop(p, data.augments().row(1).transpose())).norm(),
                      1e-12);
        }
}

TEST(Forward, DimensionMismatchThrows) {
    const auto p = init_gaussian(3, 2, 4, Activation::tanh, 1.0, 1.0, 0);
    EXPECT_THROW(forward(p, Vec::Ones(5)), DimensionError);
}

TEST(Forward, ReluIsPositivelyHomogeneousInW) {
    auto p = oracle::random_params(11, 2, 5, Activation::relu, 6);
    const Vec x = Vec::Random(5).normalized();
    const Vec base = forward(p, x);
    for (double c : {0.0, 0.5, 3.0}) {
        NetworkParams q = p;
        q.W *= c;
        EXPECT_LE((forward(q, x) - c * base).norm(), 1e-12 * (1.0 + c));
    }
}

TEST(Jacobian, WBlockEntryAndZeroVForTanh) {
    auto p = oracle::random_params(5, 2, 3, Activation::tanh, 1);
    const Vec x = Vec::Random(3).normalized();
    const Mat J = output_jacobian(p, x);
    const double pre = p.V.row(3).dot(x);
    EXPECT_NEAR(J(1, p.w_index(3, 1)), std::tanh(pre) / std::sqrt(5.0), 1e-15);
    EXPECT_EQ(J(0, p.w_index(3, 1)), 0.0);

    p.V.setZero();
    const Mat J0 = output_jacobian(p, x);
    for (Index m = 0; m < 5; ++m)
        for (Index k = 0; k < 2; ++k)
            EXPECT_EQ(J0(k, p.w_index(m, k)), 0.0);
}

TEST(Jacobian, ReluKinkGivesZeroVRow) {
    NetworkParams p{(Mat(2, 1) << 1.5, -0.7).finished(), (Mat(2, 2) << 0.0, 1.0, 1.0, 1.0).finished(),
                    Activation::relu};
    const Vec x = (Vec(2) << 1.0, 0.0).finished(); // v_0 . x == 0 exactly
    const Mat J = output_jacobian(p, x);
    EXPECT_TRUE(J.block(0, p.v_index(0, 0), 1, 2).isZero(0.0));
    EXPECT_FALSE(J.block(0, p.v_index(1, 0), 1, 2).isZero(0.0));
}

TEST(Jacobian, MatchesCentralDifferencesForTanh) {
    // >= 100 random (params, x) instances, h = 1e-6, relative error <= 1e-5.
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        const Index M = 2 + Index(seed % 7), K = 1 + Index(seed % 3), d = 2 + Index(seed % 4);
        const auto p = oracle::random_params(M, K, d, Activation::tanh, seed);
        Rng rng(seed + 1000);
        const Vec x = normalized(standard_normal(d, 1, rng));
        worst = std::max(worst, oracle::rel_err(output_jacobian(p, x), oracle::jacobian_fd(p, x, 1e-6)));
    }
    EXPECT_LE(worst, 1e-5);
    // The finer single-instance tolerance.
    const auto p = oracle::random_params(6, 2, 4, Activation::tanh, 321);
    const Vec x = Vec::Ones(4) / 2.0;
    EXPECT_LE(oracle::rel_err(output_jacobian(p, x), oracle::jacobian_fd(p, x, 1e-6)), 1e-6);
}

TEST(GradientNormBound, ZeroParametersSatisfyBound) {
    const auto p = init_gaussian(4, 2, 3, Activation::tanh, 0.0, 1.0, 0);
    const auto rep = gradient_norm_bound_check(p, p, Vec::Unit(3, 0), 1.0);
    ASSERT_EQ(rep.actual.size(), 2u);
    EXPECT_EQ(rep.actual[0], 0.0);
    EXPECT_DOUBLE_EQ(rep.bound[0], 1.0 + 1.0 / 4.0);
    EXPECT_TRUE(rep.within);
}

TEST(GradientNormBound, RandomPointsInsideBallSatisfyBound) {
    EXPECT_EQ(activation_sup(Activation::tanh), 1.0);
    EXPECT_EQ(activation_derivative_sup(Activation::tanh), 1.0);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p0 = oracle::random_params(30, 3, 5, Activation::tanh, seed);
        Rng rng(seed + 50);
        Vec delta = standard_normal(p0.param_count(), 1, rng);
        const double R = 2.0;
        delta *= 0.9 * R / delta.norm();
        const auto p = NetworkParams::unflatten(p0.flatten() + delta, 30, 3, 5, Activation::tanh);
        const Vec x = normalized(standard_normal(5, 1, rng));
        const auto rep = gradient_norm_bound_check(p, p0, x, R);
        EXPECT_TRUE(rep.within);
        for (std::size_t k = 0; k < rep.actual.size(); ++k)
            EXPECT_LE(rep.actual[k], rep.bound[k]);
    }
}

TEST(GradientNormBound, OutsideBallIsPreconditionError) {
    const auto p0 = oracle::random_params(3, 1, 2, Activation::tanh, 1);
    auto p = p0;
    p.W(0, 0) += 5.0;
    EXPECT_THROW(gradient_norm_bound_check(p, p0, Vec::Unit(2, 0), 1.0), PreconditionError);
}

TEST(Checkpoint, BinaryRoundTrip) {
    const auto p = oracle::random_params(5, 2, 3, Activation::relu, 12);
    std::stringstream ss;
    write_params(ss, p);
    EXPECT_EQ(ss.str().size(), 8u * 3 + 4 + 8u * std::size_t(p.param_count()));
    const auto q = read_params(ss);
    EXPECT_EQ(q.activation, Activation::relu);
    EXPECT_EQ(q.flatten(), p.flatten());

    std::stringstream truncated(ss.str().substr(0, 30));
    EXPECT_THROW(read_params(truncated), FormatError);
}
