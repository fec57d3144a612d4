#include <gtest/gtest.h>

#include <sstream>

#include "btntk/trainer.hpp"
#include "oracles.hpp"

using namespace btntk;

namespace {

TrainConfig small_step(double lr, long epochs) {
    TrainConfig cfg;
    cfg.lr = lr;
    cfg.max_epochs = epochs;
    cfg.delta = 1e-12;
    cfg.ntk_drift = false;
    return cfg;
}

} // namespace

TEST(Train, ConvergesImmediatelyAtTarget) {
    NetworkParams p{Mat::Identity(2, 2) * (2.0 / 50.0), Mat::Identity(2, 2) * 50.0, Activation::relu};
    const PairedDataset data(Mat::Identity(2, 2), Mat::Identity(2, 2));
    const RunResult r = train(p, data, TrainConfig{});
    EXPECT_TRUE(r.converged);
    EXPECT_EQ(r.epochs, 0);
    ASSERT_EQ(r.trajectory.size(), 1u);
    EXPECT_LE(r.trajectory[0].grad_norm_sq, 1e-26);
}

TEST(Train, SingleSmallStepFollowsKernelQuadraticForm) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto p = oracle::random_params(30, 2, 8, Activation::tanh, seed);
        const auto data = synthetic_pairs(6, 8, 0.2, seed);
        TrainConfig cfg = small_step(1e-4, 1);
        cfg.record_u_K_u = true;
        const RunResult r = train(p, data, cfg);
        ASSERT_EQ(r.trajectory.size(), 2u);
        const double decrease = (r.trajectory[0].loss - r.trajectory[1].loss) / cfg.lr;
        ASSERT_TRUE(r.trajectory[0].u_K_u.has_value());
        EXPECT_LE(oracle::rel_err(decrease, *r.trajectory[0].u_K_u), 1e-3);
        EXPECT_LE(oracle::rel_err(r.trajectory[0].grad_norm_sq, *r.trajectory[0].u_K_u), 1e-8);
    }
}

TEST(Train, SmallStepRunsAreMonotoneAndRespectDiagnostics) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto p = oracle::random_params(40, 1, 6, Activation::tanh, seed);
        const auto data = synthetic_pairs(5, 6, 0.1, seed);
        const RunResult r = train(p, data, small_step(1e-3, 1000));
        ASSERT_EQ(r.trajectory.size(), 1001u);
        for (std::size_t i = 1; i < r.trajectory.size(); ++i) {
            EXPECT_LE(r.trajectory[i].loss, r.trajectory[i - 1].loss);
            EXPECT_GT(r.trajectory[i].epoch, r.trajectory[i - 1].epoch);
        }
        // Discrete analogue of ||theta_t - theta_0|| <= kappa t.
        for (const auto& pt : r.trajectory)
            EXPECT_LE(pt.theta_drift, r.max_grad_norm * pt.time * (1 + 1e-12) + 1e-15);
        if (r.loss0 < 1.0) {
            for (const auto& pt : r.trajectory)
                EXPECT_GE(pt.lambda_min_C, 1.0 - std::sqrt(r.loss0) - 1e-6);
        }
    }
}

TEST(Train, RecordsAtCadenceAndAlwaysFinalEpoch) {
    const auto p = oracle::random_params(10, 1, 4, Activation::tanh, 1);
    const auto data = synthetic_pairs(3, 4, 0.1, 1);
    TrainConfig cfg = small_step(1e-3, 25);
    cfg.record_every = 10;
    const RunResult r = train(p, data, cfg);
    ASSERT_EQ(r.trajectory.size(), 4u);
    EXPECT_EQ(r.trajectory[1].epoch, 10);
    EXPECT_EQ(r.trajectory.back().epoch, 25);
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.epochs, 25);
}

TEST(Train, HugeLearningRateReportsDivergenceEpoch) {
    const auto p = oracle::random_params(10, 2, 4, Activation::relu, 1);
    const auto data = synthetic_pairs(3, 4, 0.1, 1);
    TrainConfig cfg = small_step(1e6, 200);
    try {
        train(p, data, cfg);
        FAIL() << "expected divergence";
    } catch (const DivergenceError& e) {
        EXPECT_GE(e.epoch, 1);
    }
}

TEST(Train, DriftAndEtaDiagnostics) {
    const auto p = oracle::random_params(200, 1, 10, Activation::tanh, 2);
    const auto data = synthetic_pairs(5, 10, 0.05, 2);
    TrainConfig cfg;
    cfg.max_epochs = 5000;
    const RunResult r = train(p, data, cfg);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(r.final_loss, cfg.delta);
    ASSERT_TRUE(r.ntk_drift.has_value());
    EXPECT_GT(r.ntk_drift->relative, 0.0);
    EXPECT_GT(r.lambda_min_K0, 0.0);
    EXPECT_EQ(r.eta.has_value(), r.loss0 < 1.0);
}

TEST(Train, SubsamplesKernelAboveBudget) {
    const auto p = oracle::random_params(10, 2, 4, Activation::tanh, 1);
    const auto data = synthetic_pairs(6, 4, 0.1, 1);
    TrainConfig cfg = small_step(1e-3, 2);
    cfg.ntk_drift = true;
    cfg.ntk_max_dim = 8; // 2NK = 24 > 8 -> 2 pairs
    const RunResult r = train(p, data, cfg);
    EXPECT_TRUE(r.ntk_subsampled);
    EXPECT_EQ(r.ntk_pairs.size(), 2u);
    EXPECT_EQ(r.K0->value.rows(), 8);
    EXPECT_EQ(ntk_pair_selection(6, 2, 8, cfg.seed), r.ntk_pairs);
}

TEST(EtaEstimate, ClosedFormAndBoundary) {
    EXPECT_NEAR(*eta_estimate(1.0, 0.75, 1), 4.0 - 2.0 * std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(*eta_estimate(2.0, 1.0 - 1e-12, 10), 0.0, 1e-6);
    EXPECT_FALSE(eta_estimate(1.0, 1.0, 1).has_value());
    EXPECT_FALSE(eta_estimate(1.0, 3.0, 1).has_value());
}

TEST(Gronwall, EnvelopeCases) {
    std::vector<TrajectoryPoint> flat(5);
    for (std::size_t i = 0; i < flat.size(); ++i) {
        flat[i].epoch = long(i);
        flat[i].time = 0.5 * double(i);
        flat[i].rep_norm_sq = 3.0;
    }
    EXPECT_TRUE(gronwall_envelope_check(flat, 0.1));

    const double lr = 0.5;
    std::vector<TrajectoryPoint> doubling(30);
    for (std::size_t i = 0; i < doubling.size(); ++i) {
        doubling[i].epoch = long(i);
        doubling[i].time = lr * double(i);
        doubling[i].rep_norm_sq = std::ldexp(1.0, int(i));
    }
    EXPECT_TRUE(gronwall_envelope_check(doubling, std::log(2.0) / lr));
    EXPECT_FALSE(gronwall_envelope_check(doubling, 0.99 * std::log(2.0) / lr));

    auto growing = flat;
    growing[3].rep_norm_sq = 3.5;
    EXPECT_FALSE(gronwall_envelope_check(growing, 0.0));
}

TEST(TrajectoryCsv, HeaderAndPrecision) {
    TrajectoryPoint pt;
    pt.epoch = 3;
    pt.loss = 1.0 / 3.0;
    std::ostringstream os;
    write_trajectory_csv(os, std::vector<TrajectoryPoint>{pt});
    const std::string s = os.str();
    EXPECT_EQ(s.substr(0, s.find('\n')), "epoch,loss,theta_drift,lambda_min_C,grad_norm_sq,u_K_u,w_norm_sq");
    EXPECT_NE(s.find("3,0.33333333333333331,"), std::string::npos);
    EXPECT_NE(s.find(",nan,"), std::string::npos);
}
