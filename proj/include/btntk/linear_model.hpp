#ifndef BTNTK_LINEAR_MODEL_HPP
#define BTNTK_LINEAR_MODEL_HPP

#include <cmath>
#include <vector>

#include "btntk/bt_loss.hpp"
#include "btntk/common.hpp"
#include "btntk/data.hpp"
#include "btntk/network.hpp"
#include "btntk/ntk.hpp"
#include "btntk/trainer.hpp"

namespace btntk {

/// Kernel model g(x) = f(x; theta0) + sum_q K0(x, x_q) alpha_q trained in function space under the
/// frozen kernel. Gradient descent on the linearized network moves the training representations by
/// -lr K0 u each step, and alpha accumulates -lr u.
struct FrozenKernelState {
    NTKMatrix K0;
    Vec f0;           // 2NK initial representations
    Vec reps;         // 2NK current representations
    Vec coefficients; // 2NK, alpha
};

struct FunctionSpaceResult {
    FrozenKernelState state;
    bool converged = false;
    long epochs = 0;
    double final_loss = 0.0;
    std::vector<double> losses; // one per epoch, including epoch 0
};

inline double stacked_loss(const Vec& reps, Index K) {
    const Mat R = unstack_reps(reps, K);
    const Index N = R.rows() / 2;
    return loss(cross_moment(R.topRows(N), R.bottomRows(N)));
}

inline Vec stacked_rep_gradient(const Vec& reps, Index K) {
    const Mat R = unstack_reps(reps, K);
    const Index N = R.rows() / 2;
    const CrossMoment C = cross_moment(R.topRows(N), R.bottomRows(N));
    return rep_gradient(C, R.topRows(N), R.bottomRows(N)).u;
}

inline FunctionSpaceResult train_function_space(const NTKMatrix& K0, const Vec& f0, const TrainConfig& config) {
    config.validate();
    require_shape(K0.value.rows() == f0.size() && K0.value.cols() == f0.size(),
                  "initial representations do not match the kernel");
    require_shape(f0.size() % (2 * K0.K) == 0, "representation length must be a multiple of 2K");
    const double scale = std::max(1.0, K0.value.norm());
    if (min_eigenvalue(K0) < -1e-8 * scale)
        throw PreconditionError("frozen kernel must be positive semidefinite");

    FunctionSpaceResult out;
    out.state = {K0, f0, f0, Vec::Zero(f0.size())};
    for (long epoch = 0;; ++epoch) {
        const Mat R = unstack_reps(out.state.reps, K0.K);
        const Index N = R.rows() / 2;
        const CrossMoment C = cross_moment(R.topRows(N), R.bottomRows(N));
        const double L = loss(C);
        if (!std::isfinite(L))
            throw DivergenceError(concat("kernel model diverged at epoch ", epoch), epoch);
        out.losses.push_back(L);
        if (L < config.delta || epoch >= config.max_epochs) {
            out.converged = L < config.delta;
            out.epochs = epoch;
            out.final_loss = L;
            break;
        }
        const Vec u = rep_gradient(C, R.topRows(N), R.bottomRows(N)).u;
        out.state.reps.noalias() -= config.lr * (K0.value * u);
        out.state.coefficients.noalias() -= config.lr * u;
    }
    return out;
}

/// Mean squared per-point distance (1/2N) sum_p ||f(p) - g(p)||^2 between two 2NK representation vectors.
inline double rep_difference(const Vec& reps_a, const Vec& reps_b, Index K) {
    require_shape(reps_a.size() == reps_b.size(), "representation vectors differ in length");
    require_shape(K >= 1 && reps_a.size() % K == 0 && reps_a.size() > 0, "length must be a positive multiple of K");
    const double points = double(reps_a.size() / K);
    return (reps_a - reps_b).squaredNorm() / points;
}

struct CrossKernel {
    Mat value;   // (2NK) x (T K): block (p, j) = K_theta0(train point p, test point j)
    Mat offsets; // T x K: f(test point; theta0)
};

inline CrossKernel cross_kernel(const NetworkParams& params0, const PairedDataset& data, const Mat& test_points) {
    require_shape(test_points.cols() == data.dim(), "test points have the wrong dimension");
    for (Index j = 0; j < test_points.rows(); ++j)
        if (std::abs(test_points.row(j).norm() - 1.0) > 1e-10)
            throw PreconditionError("test points must be unit norm");
    const Mat train = data.stacked();
    const ForwardCache ctrain = forward_cache(params0, train);
    const ForwardCache ctest = forward_cache(params0, test_points);
    return {ntk_cross(params0, train, ctrain, test_points, ctest), ctest.output};
}

/// g at each test point (T x K) from the learned coefficients.
inline Mat kernel_model_predict(const CrossKernel& cross, const Vec& coefficients) {
    const Index T = cross.offsets.rows(), K = cross.offsets.cols();
    require_shape(cross.value.rows() == coefficients.size(), "coefficients do not match the cross kernel");
    const Vec delta = cross.value.transpose() * coefficients; // T K, point-major
    Mat out = cross.offsets;
    for (Index j = 0; j < T; ++j)
        for (Index k = 0; k < K; ++k)
            out(j, k) += delta(j * K + k);
    return out;
}

/// Largest deviation max_{p,k} |f_k(x_p) - g_k(x_p)| over training points.
inline double linearization_error(const Vec& reps_network, const Vec& reps_kernel) {
    require_shape(reps_network.size() == reps_kernel.size(), "representation vectors differ in length");
    return (reps_network - reps_kernel).cwiseAbs().maxCoeff();
}

} // namespace btntk

#endif
