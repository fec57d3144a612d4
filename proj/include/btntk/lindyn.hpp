#ifndef BTNTK_LINDYN_HPP
#define BTNTK_LINDYN_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "btntk/common.hpp"
#include "btntk/trainer.hpp"

namespace btntk {

/// One classic fourth-order Runge-Kutta step for an autonomous system y' = rhs(y).
template <typename State, typename Rhs>
State rk4_step(const State& y, double h, Rhs&& rhs) {
    const State k1 = rhs(y);
    const State k2 = rhs(State(y + (0.5 * h) * k1));
    const State k3 = rhs(State(y + (0.5 * h) * k2));
    const State k4 = rhs(State(y + h * k3));
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Linear Barlow Twins: embeddings W z with loss ||W Gamma W^T - I_K||_F^2.
struct LinearState {
    Mat W;     // K x p
    Mat Gamma; // p x p, symmetric
    double t = 0.0;

    void validate() const {
        require_shape(Gamma.rows() == Gamma.cols() && W.cols() == Gamma.rows(), "W must be K x p and Gamma p x p");
        const double scale = std::max(1.0, Gamma.norm());
        if ((Gamma - Gamma.transpose()).norm() > 1e-12 * scale)
            throw InvariantError("Gamma must be symmetric");
        if (!W.allFinite())
            throw InvariantError("W must be finite");
    }
};

inline Mat linear_cross_moment(const Mat& W, const Mat& Gamma) { return W * Gamma * W.transpose(); }

inline double linear_loss(const Mat& W, const Mat& Gamma) {
    const Mat C = linear_cross_moment(W, Gamma);
    return (C - Mat::Identity(C.rows(), C.cols())).squaredNorm();
}

/// Gradient-flow vector field dW/dt = 4 (I - W Gamma W^T) W Gamma.
inline Mat lindyn_rhs(const Mat& W, const Mat& Gamma) {
    require_shape(W.cols() == Gamma.rows() && Gamma.rows() == Gamma.cols(), "W must be K x p and Gamma p x p");
    const Mat WG = W * Gamma;
    const Mat C = WG * W.transpose();
    return 4.0 * (Mat::Identity(W.rows(), W.rows()) - C) * WG;
}

inline Mat lindyn_rhs(const LinearState& s) { return lindyn_rhs(s.W, s.Gamma); }

/// Smallest nonzero |eigenvalue| of Gamma; eigenvalues below 1e-10 * ||Gamma||_2 count as zero.
inline double mu_gamma(const Mat& Gamma) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Gamma + Gamma.transpose()), Eigen::EigenvaluesOnly);
    const Vec abs_eigs = es.eigenvalues().cwiseAbs();
    const double cutoff = 1e-10 * abs_eigs.maxCoeff();
    double mu = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < abs_eigs.size(); ++i)
        if (abs_eigs(i) > cutoff)
            mu = std::min(mu, abs_eigs(i));
    return mu;
}

/// Orthogonal projector onto ker(Gamma), using the same rank cutoff as mu_gamma.
inline Mat nullspace_projector(const Mat& Gamma) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (Gamma + Gamma.transpose()));
    const Vec& ev = es.eigenvalues();
    const double cutoff = 1e-10 * ev.cwiseAbs().maxCoeff();
    Mat P = Mat::Zero(Gamma.rows(), Gamma.cols());
    for (Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev(i)) <= cutoff)
            P += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
    return P;
}

/// Step size with h ||rhs(W0)|| = 1e-3 ||W0||.
inline double default_step(const Mat& W, const Mat& Gamma) {
    const double r = lindyn_rhs(W, Gamma).norm();
    const double w = W.norm();
    if (r == 0.0 || w == 0.0)
        return 1e-3;
    return 1e-3 * w / r;
}

struct LindynStep {
    double t = 0.0;
    double loss = 0.0;
    Vec eigvals; // spectrum of C = W Gamma W^T, ascending
};

struct LindynTrajectory {
    std::vector<LindynStep> steps;
    Mat final_W;
    double mu_gamma = 0.0;
    double lambda_min_C0 = 0.0;
    double eta = 0.0; // 16 lambda_min(C(0)) mu_Gamma
    double h = 0.0;

    double envelope(double t) const { return steps.front().loss * std::exp(-eta * t); }
};

inline Vec sorted_spectrum(const Mat& C) {
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (C + C.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

/// Fixed-step RK4 from state0.t to T_end, recording loss and spectrum of C at every step.
inline LindynTrajectory integrate(const LinearState& state0, double T_end, double h) {
    state0.validate();
    if (!(h > 0.0))
        throw PreconditionError("step size must be positive");
    const long steps = std::max(0L, static_cast<long>(std::ceil((T_end - state0.t) / h - 1e-9)));

    LindynTrajectory out;
    out.h = h;
    out.mu_gamma = mu_gamma(state0.Gamma);
    auto rhs = [&](const Mat& W) { return lindyn_rhs(W, state0.Gamma); };
    auto record = [&](double t, const Mat& W) {
        const Mat C = linear_cross_moment(W, state0.Gamma);
        out.steps.push_back({t, (C - Mat::Identity(C.rows(), C.cols())).squaredNorm(), sorted_spectrum(C)});
    };

    Mat W = state0.W;
    record(state0.t, W);
    out.lambda_min_C0 = out.steps.front().eigvals(0);
    out.eta = 16.0 * out.lambda_min_C0 * out.mu_gamma;
    for (long i = 1; i <= steps; ++i) {
        W = rk4_step(W, h, rhs);
        const double t = state0.t + double(i) * h;
        if (!W.allFinite())
            throw IntegrationError(concat("linear dynamics became non-finite at t = ", t), t);
        record(t, W);
    }
    out.final_W = W;
    return out;
}

/// True iff lambda_min(C) never decreases (tolerance 1e-10) and every eigenvalue stays in (0, 1 + 1e-10).
inline bool eigen_monotonicity_check(const LindynTrajectory& traj) {
    double previous = -std::numeric_limits<double>::infinity();
    for (const auto& s : traj.steps) {
        if (s.eigvals.size() == 0)
            continue;
        const double lo = s.eigvals.minCoeff(), hi = s.eigvals.maxCoeff();
        if (lo < previous - 1e-10 || !(lo > 0.0) || !(hi < 1.0 + 1e-10))
            return false;
        previous = std::max(previous, lo);
    }
    return true;
}

/// First recorded time with loss < delta, or a negative value if never reached.
inline double time_to_loss(const LindynTrajectory& traj, double delta) {
    for (const auto& s : traj.steps)
        if (s.loss < delta)
            return s.t;
    return -1.0;
}

/// Random instance with spec(W Gamma W^T) inside (lo, hi): Gamma is PSD of the given rank, and each
/// row of W also carries a component in ker(Gamma).
inline LinearState random_linear_instance(Index K, Index p, Index rank, double lo, double hi, std::uint64_t seed) {
    if (K < 1 || rank < K || rank > p || !(0.0 < lo && lo < hi))
        throw PreconditionError("random_linear_instance needs 1 <= K <= rank <= p and 0 < lo < hi");
    Rng rng(seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const Eigen::HouseholderQR<Mat> qr(standard_normal(p, p, rng));
    const Mat U = qr.householderQ();
    Vec d = Vec::Zero(p);
    for (Index i = 0; i < rank; ++i)
        d(i) = 0.5 + 1.5 * unif(rng);
    LinearState s;
    s.Gamma = U * d.asDiagonal() * U.transpose();
    s.Gamma = 0.5 * (s.Gamma + s.Gamma.transpose()).eval();

    // Target C = Q diag(c) Q^T, and W = C^{1/2} Y D_r^{-1/2} U_r^T with Y Y^T = I.
    const Eigen::HouseholderQR<Mat> qk(standard_normal(K, K, rng));
    const Mat Q = qk.householderQ();
    Vec c(K);
    for (Index k = 0; k < K; ++k)
        c(k) = lo + (hi - lo) * unif(rng);
    const Mat C_half = Q * c.cwiseSqrt().asDiagonal() * Q.transpose();
    const Eigen::HouseholderQR<Mat> qy(standard_normal(rank, K, rng));
    const Mat Y = Mat(qy.householderQ()).leftCols(K).transpose(); // K x rank, orthonormal rows
    const Mat U_r = U.leftCols(rank);
    const Vec d_inv_sqrt = d.head(rank).cwiseSqrt().cwiseInverse();
    s.W = C_half * Y * d_inv_sqrt.asDiagonal() * U_r.transpose();
    if (rank < p)
        s.W += 0.3 * standard_normal(K, p - rank, rng) * U.rightCols(p - rank).transpose();
    return s;
}

/// Per-step CSV: t, loss, lambda_min_C, lambda_max_C, envelope_value.
inline void write_lindyn_csv(std::ostream& os, const LindynTrajectory& traj) {
    os << "t,loss,lambda_min_C,lambda_max_C,envelope_value\n";
    for (const auto& s : traj.steps) {
        write_csv_number(os, s.t);
        os << ',';
        write_csv_number(os, s.loss);
        os << ',';
        write_csv_number(os, s.eigvals(0));
        os << ',';
        write_csv_number(os, s.eigvals(s.eigvals.size() - 1));
        os << ',';
        write_csv_number(os, traj.envelope(s.t - traj.steps.front().t));
        os << '\n';
    }
}

} // namespace btntk

#endif
