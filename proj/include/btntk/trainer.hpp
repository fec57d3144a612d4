#ifndef BTNTK_TRAINER_HPP
#define BTNTK_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "btntk/bt_loss.hpp"
#include "btntk/common.hpp"
#include "btntk/data.hpp"
#include "btntk/network.hpp"
#include "btntk/ntk.hpp"

namespace btntk {

struct TrainConfig {
    double lr = 0.5;
    double delta = 1e-5;
    long max_epochs = 20000;
    std::uint64_t seed = 0;
    long record_every = 1;

    bool ntk_drift = true;      // assemble K(0) and K(final)
    bool record_u_K_u = false;  // O((NK)^2 M) per recorded epoch
    Index ntk_max_dim = 4000;   // above this 2NK, kernels use a fixed random subset of pairs

    void validate() const {
        if (!(lr > 0.0) || !(delta > 0.0) || max_epochs < 1 || record_every < 1)
            throw PreconditionError("TrainConfig needs lr > 0, delta > 0, max_epochs >= 1, record_every >= 1");
    }
};

struct TrajectoryPoint {
    long epoch = 0;
    double time = 0.0;            // epoch * lr, the gradient-flow clock
    double loss = 0.0;
    double theta_drift = 0.0;     // ||theta_t - theta_0||
    double lambda_min_C = 0.0;
    double grad_norm_sq = 0.0;    // ||dL/dtheta||^2
    std::optional<double> u_K_u;
    double w_norm_sq = 0.0;       // sum_m ||w_m||^2
    double rep_norm_sq = 0.0;     // sum over the 2N points of ||f(x)||^2
};

struct RunResult {
    bool converged = false;
    long epochs = 0; // first epoch with loss < delta, or the last epoch run
    double loss0 = 0.0;
    double final_loss = 0.0;
    NetworkParams final_params;
    Mat final_reps; // 2N x K, anchors on top
    std::vector<TrajectoryPoint> trajectory;
    double max_grad_norm = 0.0; // over every step taken, not only recorded ones

    std::optional<NTKMatrix> K0;
    std::optional<Drift> ntk_drift;
    double lambda_min_K0 = std::numeric_limits<double>::quiet_NaN();
    std::optional<double> eta;
    std::vector<Index> ntk_pairs; // pairs the kernels were assembled on (all pairs unless subsampled)
    bool ntk_subsampled = false;
};

/// Width-independent contraction rate 4 lambda (1 - sqrt(1 - rho)) / N with 1 - rho = loss0.
/// Returns nothing when loss0 >= 1, where the rate is not defined.
inline std::optional<double> eta_estimate(double K0_min_eig, double loss0, Index N) {
    if (!(loss0 < 1.0) || loss0 < 0.0 || N < 1)
        return std::nullopt;
    return 4.0 * K0_min_eig * (1.0 - std::sqrt(loss0)) / double(N);
}

/// Pairs used for kernel diagnostics: all of them, or a seeded random subset when 2NK exceeds the budget.
inline std::vector<Index> ntk_pair_selection(Index N, Index K, Index max_dim, std::uint64_t seed) {
    std::vector<Index> pairs(static_cast<std::size_t>(N));
    std::iota(pairs.begin(), pairs.end(), Index{0});
    if (2 * N * K <= max_dim)
        return pairs;
    const Index keep = std::max<Index>(1, max_dim / (2 * K));
    Rng rng(seed ^ 0x9E3779B97F4A7C15ull);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    pairs.resize(static_cast<std::size_t>(keep));
    std::sort(pairs.begin(), pairs.end());
    return pairs;
}

/// Full-batch gradient descent theta <- theta - lr * dL/dtheta until loss < delta or max_epochs.
inline RunResult train(const NetworkParams& params0, const PairedDataset& data, const TrainConfig& config) {
    config.validate();
    params0.validate();
    require_shape(params0.input_dim() == data.dim(), "network input dimension does not match the dataset");

    const Index N = data.size(), K = params0.embed_dim();
    const Mat inputs = data.stacked();
    const Vec theta0 = params0.flatten();

    RunResult result;
    result.ntk_pairs = ntk_pair_selection(N, K, config.ntk_max_dim, config.seed);
    result.ntk_subsampled = static_cast<Index>(result.ntk_pairs.size()) < N;
    const PairedDataset kernel_data = result.ntk_subsampled ? data.subset(result.ntk_pairs) : data;
    const Mat kernel_inputs = kernel_data.stacked();

    if (config.ntk_drift) {
        result.K0 = assemble_points(params0, kernel_inputs);
        result.lambda_min_K0 = min_eigenvalue(*result.K0);
    }

    NetworkParams params = params0;
    Vec theta = theta0;
    for (long epoch = 0;; ++epoch) {
        const LossEvaluation ev = evaluate(params, data, inputs, true);
        if (!std::isfinite(ev.value) || !ev.gradient.allFinite())
            throw DivergenceError(concat("loss became non-finite at epoch ", epoch, " (learning rate too large?)"),
                                  epoch);
        if (epoch == 0)
            result.loss0 = ev.value;

        const bool done = ev.value < config.delta || epoch >= config.max_epochs;
        const double grad_sq = ev.gradient.squaredNorm();
        if (!done)
            result.max_grad_norm = std::max(result.max_grad_norm, std::sqrt(grad_sq));

        if (epoch % config.record_every == 0 || done) {
            TrajectoryPoint pt;
            pt.epoch = epoch;
            pt.time = double(epoch) * config.lr;
            pt.loss = ev.value;
            pt.theta_drift = (theta - theta0).norm();
            pt.lambda_min_C = min_eigenvalue_symmetric(ev.C.value);
            pt.grad_norm_sq = grad_sq;
            pt.w_norm_sq = params.W.squaredNorm();
            pt.rep_norm_sq = ev.reps.squaredNorm();
            if (config.record_u_K_u) {
                const NTKMatrix Kt = assemble_points(params, inputs);
                pt.u_K_u = quadratic_form(Kt, stack_reps(ev.rep_grad.topRows(N), ev.rep_grad.bottomRows(N)));
            }
            result.trajectory.push_back(pt);
        }

        if (done) {
            result.converged = ev.value < config.delta;
            result.epochs = epoch;
            result.final_loss = ev.value;
            result.final_reps = ev.reps;
            break;
        }

        theta -= config.lr * ev.gradient;
        params = NetworkParams::unflatten(theta, params.width(), K, params.input_dim(), params.activation);
    }

    result.final_params = params;
    if (config.ntk_drift) {
        const NTKMatrix Kt = assemble_points(params, kernel_inputs);
        result.ntk_drift = drift(*result.K0, Kt);
        result.eta = eta_estimate(result.lambda_min_K0, result.loss0, static_cast<Index>(result.ntk_pairs.size()));
    }
    return result;
}

/// True iff the recorded representation norms stay below u(0) exp(rate * (t - t0)).
inline bool gronwall_envelope_check(std::span<const TrajectoryPoint> trajectory, double growth_rate) {
    if (trajectory.empty())
        return true;
    const double u0 = trajectory.front().rep_norm_sq;
    const double t0 = trajectory.front().time;
    for (const auto& pt : trajectory) {
        const double envelope = u0 * std::exp(growth_rate * (pt.time - t0));
        if (pt.rep_norm_sq > envelope * (1.0 + 1e-9) + 1e-300)
            return false;
    }
    return true;
}

inline void write_csv_number(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << buf;
}

/// Trajectory CSV: epoch, loss, theta_drift, lambda_min_C, grad_norm_sq, u_K_u, w_norm_sq.
inline void write_trajectory_csv(std::ostream& os, std::span<const TrajectoryPoint> trajectory) {
    os << "epoch,loss,theta_drift,lambda_min_C,grad_norm_sq,u_K_u,w_norm_sq\n";
    for (const auto& pt : trajectory) {
        os << pt.epoch << ',';
        write_csv_number(os, pt.loss);
        os << ',';
        write_csv_number(os, pt.theta_drift);
        os << ',';
        write_csv_number(os, pt.lambda_min_C);
        os << ',';
        write_csv_number(os, pt.grad_norm_sq);
        os << ',';
        write_csv_number(os, pt.u_K_u.value_or(std::numeric_limits<double>::quiet_NaN()));
        os << ',';
        write_csv_number(os, pt.w_norm_sq);
        os << '\n';
    }
}

} // namespace btntk

#endif
