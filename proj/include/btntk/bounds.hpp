#ifndef BTNTK_BOUNDS_HPP
#define BTNTK_BOUNDS_HPP

#include <cmath>
#include <cstdint>

#include "btntk/common.hpp"
#include "btntk/data.hpp"
#include "btntk/network.hpp"
#include "btntk/ntk.hpp"

namespace btntk {

// ---------------------------------------------------------------------------
// Hilbert-Schmidt geometry of Gamma_i = (z_i z_i+^* + z_i+ z_i^*) / 2 through a scalar kernel
// ---------------------------------------------------------------------------

/// The four N x N Gram blocks of a scalar kernel on a paired dataset:
/// xx(i,j) = k(x_i, x_j), xp(i,j) = k(x_i, x_j+), px(i,j) = k(x_i+, x_j), pp(i,j) = k(x_i+, x_j+).
struct ScalarKernelGram {
    Mat xx, xp, px, pp;

    Index size() const { return xx.rows(); }

    void validate() const {
        const Index N = xx.rows();
        require_shape(xx.cols() == N && xp.rows() == N && xp.cols() == N && px.rows() == N && px.cols() == N &&
                          pp.rows() == N && pp.cols() == N,
                      "Gram blocks must all be N x N");
    }
};

template <typename Kernel>
ScalarKernelGram gram_from_kernel(const PairedDataset& data, Kernel&& kernel) {
    const Index N = data.size();
    ScalarKernelGram g{Mat(N, N), Mat(N, N), Mat(N, N), Mat(N, N)};
    for (Index i = 0; i < N; ++i) {
        const Vec xi = data.anchors().row(i).transpose();
        const Vec pi = data.augments().row(i).transpose();
        for (Index j = 0; j < N; ++j) {
            const Vec xj = data.anchors().row(j).transpose();
            const Vec pj = data.augments().row(j).transpose();
            g.xx(i, j) = kernel(xi, xj);
            g.xp(i, j) = kernel(xi, pj);
            g.px(i, j) = kernel(pi, xj);
            g.pp(i, j) = kernel(pi, pj);
        }
    }
    return g;
}

/// Gram blocks of the trace kernel trace(K_theta(x, x')) of the network NTK.
inline ScalarKernelGram trace_kernel_gram(const NetworkParams& params, const PairedDataset& data) {
    const Index N = data.size(), M = params.width();
    const Mat X = data.stacked();
    const ForwardCache c = forward_cache(params, X);
    const Vec w_sq = params.W.rowwise().squaredNorm();
    // trace K(a,b) = (1/M) [K sum_m phi_a phi_b + sum_m ||w_m||^2 phi'_a phi'_b a.b]
    const Mat first = double(params.embed_dim()) * (c.act * c.act.transpose());
    const Mat second = (c.dact * w_sq.asDiagonal() * c.dact.transpose()).cwiseProduct(X * X.transpose());
    const Mat full = (first + second) / double(M);
    return {full.topLeftCorner(N, N), full.topRightCorner(N, N), full.bottomLeftCorner(N, N),
            full.bottomRightCorner(N, N)};
}

/// ||Gamma_i - Gamma_j||_HS^2 expanded with the kernel trick.
inline double gamma_hs_distance(const ScalarKernelGram& g, Index i, Index j) {
    if (i == j)
        throw PreconditionError("gamma_hs_distance needs i != j");
    if (i < 0 || j < 0 || i >= g.size() || j >= g.size())
        throw PreconditionError(concat("pair index out of range (", i, ", ", j, ") for N = ", g.size()));
    const double self_i = 0.5 * (g.xx(i, i) * g.pp(i, i) + g.xp(i, i) * g.xp(i, i));
    const double self_j = 0.5 * (g.xx(j, j) * g.pp(j, j) + g.xp(j, j) * g.xp(j, j));
    return self_i + self_j - g.xx(i, j) * g.pp(i, j) - g.xp(i, j) * g.px(i, j);
}

/// V_hat = 1/(N'(N'-1)) sum_{i<j<N'} ||Gamma_i - Gamma_j||_HS^2.
inline double v_hat(const ScalarKernelGram& g, Index N_prime) {
    g.validate();
    if (N_prime < 2 || N_prime > g.size())
        throw PreconditionError(concat("v_hat needs 2 <= N' <= N, got N' = ", N_prime));
    double sum = 0.0;
    for (Index i = 0; i < N_prime; ++i)
        for (Index j = i + 1; j < N_prime; ++j)
            sum += gamma_hs_distance(g, i, j);
    return sum / (double(N_prime) * double(N_prime - 1));
}

/// S estimate: max over all 2N points of sqrt(k(x, x)).
inline double feature_radius(const ScalarKernelGram& g) {
    const double m = std::max(g.xx.diagonal().maxCoeff(), g.pp.diagonal().maxCoeff());
    return std::sqrt(std::max(m, 0.0));
}

// ---------------------------------------------------------------------------
// Slack terms and the finite-width population bound
// ---------------------------------------------------------------------------

struct BoundInputs {
    Index N = 0;
    Index N_prime = 0;
    double eps = 0.1;
    double delta = 0.0;
    double B = 1.0;
    double S = 1.0;
    double V_hat = 0.0;
    double zeta = 0.0;
    Index K = 1;

    void validate() const {
        if (N < 1 || N_prime < 2 || N_prime > N)
            throw PreconditionError("BoundInputs needs 2 <= N' <= N");
        if (!(eps > 0.0 && eps < 1.0))
            throw PreconditionError("eps must lie in (0, 1)");
        if (delta < 0.0 || !(B > 0.0) || !(S > 0.0) || V_hat < 0.0 || zeta < 0.0 || K < 1)
            throw PreconditionError("B, S must be positive; delta, V_hat, zeta nonnegative; K >= 1");
    }
};

struct Slack {
    double nu_sqrt_scale = 0.0; // nu(N, eps): deviation bound before squaring
    double nu_full = 0.0;       // nu(N, eps, delta): the population-loss slack
};

inline Slack slack(const BoundInputs& in) {
    in.validate();
    const double N = double(in.N), Np = double(in.N_prime);
    const double B4 = std::pow(in.B, 4), S4 = std::pow(in.S, 4), S8 = S4 * S4;
    const double variance_term = in.V_hat + std::exp(-(Np - 1.0) * (Np - 1.0) * in.eps * in.eps / (8.0 * S8 * Np));
    Slack s;
    s.nu_sqrt_scale = in.B * in.B / std::sqrt(N) * std::sqrt(variance_term) +
                      std::exp(-N * in.eps * in.eps / (2.0 * B4 * S4));
    s.nu_full = 3.0 * in.delta + 3.0 * B4 / N * variance_term + 3.0 * std::exp(-N * in.eps * in.eps / (B4 * S4));
    return s;
}

/// 2 nu(N, eps, delta) + 8 K^2 zeta^2 (2 B S + zeta)^2.
inline double nn_population_bound(const BoundInputs& in) {
    const double nu = slack(in).nu_full;
    const double K = double(in.K);
    const double t = 2.0 * in.B * in.S + in.zeta;
    return 2.0 * nu + 8.0 * K * K * in.zeta * in.zeta * t * t;
}

// ---------------------------------------------------------------------------
// First-layer scale calibration for ReLU
// ---------------------------------------------------------------------------

inline double default_calibration_target(Index K) { return (2.0 * double(K) - 1.0) / (2.0 * double(K)); }

/// Monte-Carlo estimate of E[C_kk] at initialization (second layer integrated out analytically):
/// (1/N) sum_n (1/M) sum_m phi(v_m.x_n) phi(v_m.x_n+) for first-layer rows V.
inline double expected_diag_cross_moment(const PairedDataset& data, const Mat& V, Activation activation) {
    require_shape(V.cols() == data.dim(), "first-layer weights have the wrong input dimension");
    const Mat a = apply_activation(activation, data.anchors() * V.transpose());
    const Mat b = apply_activation(activation, data.augments() * V.transpose());
    return a.cwiseProduct(b).sum() / (double(data.size()) * double(V.rows()));
}

/// Probe first layer with rows v_m ~ N(0, scale^2 I).
inline Mat probe_first_layer(Index M_probe, Index d, double scale, std::uint64_t seed) {
    Rng rng(seed);
    return scale * standard_normal(M_probe, d, rng);
}

/// Scale s for v_m ~ N(0, s^2) that puts the estimated E[C_kk] at `target`. ReLU is positively
/// homogeneous, so the estimate scales as s^2 and a single probe at s = 1 determines s.
inline double calibrate_first_layer_scale(const PairedDataset& data, Index K, double target, Index M_probe,
                                          std::uint64_t seed, Activation activation = Activation::relu) {
    if (activation != Activation::relu)
        throw PreconditionError("first-layer calibration relies on ReLU homogeneity");
    if (K < 1 || M_probe < 1 || !(target > 0.0))
        throw PreconditionError("calibration needs K >= 1, M_probe >= 1 and a positive target");
    const double s0 = 1.0;
    const double estimate = expected_diag_cross_moment(data, probe_first_layer(M_probe, data.dim(), s0, seed), activation);
    if (!(estimate > 0.0))
        throw CalibrationError(concat("estimated E[C_kk] is ", estimate, " at unit scale; cannot calibrate"));
    return s0 * std::sqrt(target / estimate);
}

} // namespace btntk

#endif
