#ifndef BTNTK_BT_LOSS_HPP
#define BTNTK_BT_LOSS_HPP

#include <cmath>

#include "btntk/common.hpp"
#include "btntk/data.hpp"
#include "btntk/network.hpp"

namespace btntk {

/// Symmetrized cross-moment matrix C = (1/2N) sum_n f(x_n) f(x_n+)^T + f(x_n+) f(x_n)^T.
struct CrossMoment {
    Mat value;

    Index dim() const { return value.rows(); }
};

/// dL/df in the frozen ordering: entry n*K + k is dL/df_k(x_n), entry (N + n)*K + k is dL/df_k(x_n+).
struct RepGradient {
    Vec u;
};

/// Flattens N x K anchor and augment representations into the 2NK ordering used by RepGradient and
/// the assembled kernel (point-major, output index fastest).
inline Vec stack_reps(const Mat& reps_anchor, const Mat& reps_augment) {
    require_shape(reps_anchor.rows() == reps_augment.rows() && reps_anchor.cols() == reps_augment.cols(),
                  "anchor and augment representations differ in shape");
    const Index N = reps_anchor.rows(), K = reps_anchor.cols();
    Vec out(2 * N * K);
    for (Index n = 0; n < N; ++n)
        for (Index k = 0; k < K; ++k) {
            out(n * K + k) = reps_anchor(n, k);
            out((N + n) * K + k) = reps_augment(n, k);
        }
    return out;
}

/// Inverse of stack_reps: a 2N x K matrix, anchors in the top N rows.
inline Mat unstack_reps(const Vec& stacked, Index K) {
    require_shape(K >= 1 && stacked.size() % (2 * K) == 0, "stacked representation length is not a multiple of 2K");
    const Index P = stacked.size() / K;
    Mat out(P, K);
    for (Index p = 0; p < P; ++p)
        for (Index k = 0; k < K; ++k)
            out(p, k) = stacked(p * K + k);
    return out;
}

inline CrossMoment cross_moment(const Mat& reps_anchor, const Mat& reps_augment) {
    require_shape(reps_anchor.rows() == reps_augment.rows() && reps_anchor.cols() == reps_augment.cols(),
                  "anchor and augment representations differ in shape");
    require_shape(reps_anchor.rows() >= 1, "need at least one pair");
    const double N = double(reps_anchor.rows());
    Mat ab = reps_anchor.transpose() * reps_augment;
    return {(ab + ab.transpose()) / (2.0 * N)};
}

/// Barlow Twins loss ||C - I||_F^2.
inline double loss(const CrossMoment& C) {
    require_shape(C.value.rows() == C.value.cols(), "cross-moment matrix must be square");
    return (C.value - Mat::Identity(C.dim(), C.dim())).squaredNorm();
}

/// Representation-space gradient as a 2N x K matrix (anchors on top), before flattening.
inline Mat rep_gradient_matrix(const CrossMoment& C, const Mat& reps_anchor, const Mat& reps_augment) {
    const Index N = reps_anchor.rows(), K = reps_anchor.cols();
    require_shape(C.dim() == K && reps_augment.rows() == N && reps_augment.cols() == K,
                  "cross-moment and representations disagree in shape");
    const Mat C_minus_I = C.value - Mat::Identity(K, K);
    Mat G(2 * N, K);
    // dL/df_k(x_n) = (2/N) e_k^T (C - I) f(x_n+), and symmetrically for x_n+.
    G.topRows(N).noalias() = (2.0 / double(N)) * reps_augment * C_minus_I.transpose();
    G.bottomRows(N).noalias() = (2.0 / double(N)) * reps_anchor * C_minus_I.transpose();
    return G;
}

inline RepGradient rep_gradient(const CrossMoment& C, const Mat& reps_anchor, const Mat& reps_augment) {
    const Mat G = rep_gradient_matrix(C, reps_anchor, reps_augment);
    const Index N = reps_anchor.rows();
    return {stack_reps(G.topRows(N), G.bottomRows(N))};
}

/// Loss, cross-moment and parameter gradient at one parameter point.
struct LossEvaluation {
    CrossMoment C;
    double value = 0.0;
    Mat reps;      // 2N x K, anchors on top
    Mat rep_grad;  // 2N x K, same layout
    Vec gradient;  // flat dL/dtheta
};

/// Assembles dL/dtheta = J^T u from per-neuron closed forms without building J:
///   dL/dw_{mk} = (1/sqrt M) sum_p phi(v_m^T x_p) u_{p,k}
///   dL/dv_m    = (1/sqrt M) sum_p phi'(v_m^T x_p) (w_m . u_p) x_p
inline Vec gradient_from_cache(const NetworkParams& params, const Mat& inputs, const ForwardCache& cache,
                               const Mat& rep_grad) {
    const Index M = params.width(), K = params.embed_dim(), d = params.input_dim();
    const double scale = 1.0 / std::sqrt(double(M));
    const Mat grad_W = scale * (cache.act.transpose() * rep_grad);                                      // M x K
    const Mat back = (cache.dact.array() * (rep_grad * params.W.transpose()).array()).matrix();         // P x M
    const Mat grad_V = scale * (back.transpose() * inputs);                                             // M x d
    Vec g(M * (d + K));
    // Row-major flattening: W entries, then V entries.
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(g.data(), M, K) = grad_W;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(g.data() + M * K, M, d) = grad_V;
    return g;
}

inline LossEvaluation evaluate(const NetworkParams& params, const PairedDataset& data, const Mat& inputs,
                               bool with_gradient = true) {
    const Index N = data.size();
    const ForwardCache cache = forward_cache(params, inputs);
    LossEvaluation ev;
    ev.reps = cache.output;
    ev.C = cross_moment(cache.output.topRows(N), cache.output.bottomRows(N));
    ev.value = loss(ev.C);
    if (with_gradient) {
        ev.rep_grad = rep_gradient_matrix(ev.C, cache.output.topRows(N), cache.output.bottomRows(N));
        ev.gradient = gradient_from_cache(params, inputs, cache, ev.rep_grad);
    }
    return ev;
}

inline LossEvaluation evaluate(const NetworkParams& params, const PairedDataset& data, bool with_gradient = true) {
    return evaluate(params, data, data.stacked(), with_gradient);
}

/// Flat gradient of the Barlow Twins loss with respect to theta.
inline Vec param_gradient(const NetworkParams& params, const PairedDataset& data) {
    return evaluate(params, data).gradient;
}

/// Loss of the network on the dataset.
inline double network_loss(const NetworkParams& params, const PairedDataset& data) {
    return evaluate(params, data, false).value;
}

/// Instantaneous growth rate of sum_m ||w_m||^2 under gradient flow: 8 trace((I - C) C).
inline double weight_norm_rate(const CrossMoment& C) {
    const Index K = C.dim();
    return 8.0 * ((Mat::Identity(K, K) - C.value) * C.value).trace();
}

inline double min_eigenvalue_symmetric(const Mat& A) {
    Eigen::SelfAdjointEigenSolver<Mat> solver(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

} // namespace btntk

#endif
