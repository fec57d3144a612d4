#ifndef BTNTK_NETWORK_HPP
#define BTNTK_NETWORK_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "btntk/common.hpp"

namespace btntk {

enum class Activation : std::uint32_t { tanh = 0, relu = 1 };

inline std::string_view to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation parse_activation(std::string_view name) {
    if (name == "tanh")
        return Activation::tanh;
    if (name == "relu")
        return Activation::relu;
    throw PreconditionError(concat("unknown activation '", name, "'"));
}

inline double activate(Activation a, double t) { return a == Activation::tanh ? std::tanh(t) : (t > 0.0 ? t : 0.0); }

/// Derivative of the activation. ReLU uses the weak derivative with phi'(0) = 0.
inline double activate_derivative(Activation a, double t) {
    if (a == Activation::tanh) {
        const double th = std::tanh(t);
        return 1.0 - th * th;
    }
    return t > 0.0 ? 1.0 : 0.0;
}

/// Supremum of |phi| over the real line (infinite for ReLU).
inline double activation_sup(Activation a) {
    return a == Activation::tanh ? 1.0 : std::numeric_limits<double>::infinity();
}

/// Supremum of |phi'| over the real line.
inline double activation_derivative_sup(Activation) { return 1.0; }

/// Parameters of f(x) = (1/sqrt(M)) * sum_m w_m phi(v_m^T x).
///
/// W is M x K (row m is w_m), V is M x d (row m is v_m). The flat parameter vector theta lists all
/// entries of W row-major followed by all entries of V row-major.
struct NetworkParams {
    Mat W;
    Mat V;
    Activation activation = Activation::tanh;

    Index width() const { return W.rows(); }
    Index embed_dim() const { return W.cols(); }
    Index input_dim() const { return V.cols(); }
    Index param_count() const { return width() * (input_dim() + embed_dim()); }

    void validate() const {
        require_shape(W.rows() == V.rows(), "W and V must have the same number of rows (width)");
        require_shape(W.rows() >= 1 && W.cols() >= 1 && V.cols() >= 1, "network dimensions must be positive");
        if (!W.allFinite() || !V.allFinite())
            throw InvariantError("network parameters must be finite");
    }

    Vec flatten() const {
        Vec theta(param_count());
        Index i = 0;
        for (Index m = 0; m < width(); ++m)
            for (Index k = 0; k < embed_dim(); ++k)
                theta(i++) = W(m, k);
        for (Index m = 0; m < width(); ++m)
            for (Index r = 0; r < input_dim(); ++r)
                theta(i++) = V(m, r);
        return theta;
    }

    static NetworkParams unflatten(const Vec& theta, Index M, Index K, Index d, Activation activation) {
        require_shape(theta.size() == M * (d + K), concat("theta has length ", theta.size(), ", expected ", M * (d + K)));
        NetworkParams p{Mat(M, K), Mat(M, d), activation};
        Index i = 0;
        for (Index m = 0; m < M; ++m)
            for (Index k = 0; k < K; ++k)
                p.W(m, k) = theta(i++);
        for (Index m = 0; m < M; ++m)
            for (Index r = 0; r < d; ++r)
                p.V(m, r) = theta(i++);
        return p;
    }

    /// Position of w_{m,k} and v_{m,r} in the flat vector.
    Index w_index(Index m, Index k) const { return m * embed_dim() + k; }
    Index v_index(Index m, Index r) const { return width() * embed_dim() + m * input_dim() + r; }
};

/// W ~ N(0, variance), V ~ N(0, variance * first_layer_scale^2), drawn in flattening order.
inline NetworkParams init_gaussian(Index M, Index K, Index d, Activation activation, double variance = 1.0,
                                   double first_layer_scale = 1.0, std::uint64_t seed = 0) {
    if (M < 1 || K < 1 || d < 1)
        throw PreconditionError("init_gaussian needs M, K, d >= 1");
    if (variance < 0.0 || first_layer_scale <= 0.0)
        throw PreconditionError("variance must be nonnegative and first_layer_scale positive");
    Rng rng(seed);
    const double sd = std::sqrt(variance);
    NetworkParams p;
    p.W = sd * standard_normal(M, K, rng);
    p.V = (sd * first_layer_scale) * standard_normal(M, d, rng);
    p.activation = activation;
    return p;
}

template <typename Derived>
Mat apply_activation(Activation a, const Eigen::MatrixBase<Derived>& pre) {
    if (a == Activation::tanh)
        return pre.array().tanh().matrix();
    return pre.cwiseMax(0.0);
}

template <typename Derived>
Mat apply_activation_derivative(Activation a, const Eigen::MatrixBase<Derived>& pre) {
    if (a == Activation::tanh)
        return (1.0 - pre.array().tanh().square()).matrix();
    return (pre.array() > 0.0).template cast<double>().matrix();
}

/// Forward pass of a single input; returns the K-vector (1/sqrt(M)) W^T phi(V x).
inline Vec forward(const NetworkParams& params, const Vec& x) {
    require_shape(x.size() == params.input_dim(),
                  concat("input has dimension ", x.size(), ", network expects ", params.input_dim()));
    const Vec hidden = apply_activation(params.activation, params.V * x);
    return params.W.transpose() * hidden / std::sqrt(double(params.width()));
}

/// Hidden-layer quantities for a batch of inputs (one per row). Shared by loss, gradient and
/// kernel computations so the M x d product is formed once per parameter point.
struct ForwardCache {
    Mat pre;    // P x M, v_m^T x_p
    Mat act;    // P x M, phi(pre)
    Mat dact;   // P x M, phi'(pre)
    Mat output; // P x K, f(x_p)
};

inline ForwardCache forward_cache(const NetworkParams& params, const Mat& inputs) {
    require_shape(inputs.cols() == params.input_dim(),
                  concat("inputs have dimension ", inputs.cols(), ", network expects ", params.input_dim()));
    ForwardCache c;
    c.pre.noalias() = inputs * params.V.transpose();
    c.act = apply_activation(params.activation, c.pre);
    c.dact = apply_activation_derivative(params.activation, c.pre);
    c.output.noalias() = c.act * params.W / std::sqrt(double(params.width()));
    return c;
}

/// Outputs for every row of `inputs` (P x K).
inline Mat forward_batch(const NetworkParams& params, const Mat& inputs) {
    require_shape(inputs.cols() == params.input_dim(), "input dimension mismatch");
    const Mat pre = inputs * params.V.transpose();
    return apply_activation(params.activation, pre) * params.W / std::sqrt(double(params.width()));
}

/// K x M(d+K) Jacobian of the outputs with respect to theta (canonical flattening order).
inline Mat output_jacobian(const NetworkParams& params, const Vec& x) {
    require_shape(x.size() == params.input_dim(), "input dimension mismatch");
    const Index M = params.width(), K = params.embed_dim(), d = params.input_dim();
    const double scale = 1.0 / std::sqrt(double(M));
    const Vec pre = params.V * x;
    Mat J = Mat::Zero(K, params.param_count());
    for (Index m = 0; m < M; ++m) {
        const double a = activate(params.activation, pre(m)) * scale;
        const double da = activate_derivative(params.activation, pre(m)) * scale;
        for (Index k = 0; k < K; ++k) {
            J(k, params.w_index(m, k)) = a;
            if (da != 0.0)
                J.row(k).segment(params.v_index(m, 0), d) = (params.W(m, k) * da) * x.transpose();
        }
    }
    return J;
}

struct GradientNormReport {
    std::vector<double> actual; // ||grad_theta f_k(x)||^2 per output k
    std::vector<double> bound;  // c_phi^2 + c_phi'^2 R^2 / M + c_phi'^2 ||theta0||^2 / M
    bool within = true;
};

/// Compares ||grad f_k||^2 against the width-uniform bound valid in the ball ||theta - theta0|| <= R.
inline GradientNormReport gradient_norm_bound_check(const NetworkParams& params, const NetworkParams& params0,
                                                    const Vec& x, double R) {
    const Vec theta = params.flatten();
    const Vec theta0 = params0.flatten();
    require_shape(theta.size() == theta0.size(), "params and params0 differ in shape");
    if (R < 0.0 || (theta - theta0).norm() > R * (1.0 + 1e-12))
        throw PreconditionError("params must lie within distance R of params0");
    const double M = double(params.width());
    const double c_phi = activation_sup(params.activation);
    const double c_dphi = activation_derivative_sup(params.activation);
    const double b = c_phi * c_phi + c_dphi * c_dphi * R * R / M + c_dphi * c_dphi * theta0.squaredNorm() / M;

    const Mat J = output_jacobian(params, x);
    GradientNormReport report;
    for (Index k = 0; k < params.embed_dim(); ++k) {
        report.actual.push_back(J.row(k).squaredNorm());
        report.bound.push_back(b);
        report.within = report.within && report.actual.back() <= b + 1e-9;
    }
    return report;
}

// ---------------------------------------------------------------------------
// Checkpoints: u64 M, u64 K, u64 d, u32 activation code, then M(d+K) doubles, all little-endian.
// ---------------------------------------------------------------------------

inline void write_params(std::ostream& os, const NetworkParams& params) {
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(params.width()));
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(params.embed_dim()));
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(params.input_dim()));
    io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.activation));
    const Vec theta = params.flatten();
    for (Index i = 0; i < theta.size(); ++i)
        io::write_le<double>(os, theta(i));
}

inline NetworkParams read_params(std::istream& is) {
    const auto M = static_cast<Index>(io::read_le<std::uint64_t>(is));
    const auto K = static_cast<Index>(io::read_le<std::uint64_t>(is));
    const auto d = static_cast<Index>(io::read_le<std::uint64_t>(is));
    const auto code = io::read_le<std::uint32_t>(is);
    if (code > 1)
        throw FormatError(concat("unknown activation code ", code, " in checkpoint"));
    if (M < 1 || K < 1 || d < 1)
        throw FormatError("checkpoint header has a zero dimension");
    Vec theta(M * (d + K));
    for (Index i = 0; i < theta.size(); ++i)
        theta(i) = io::read_le<double>(is);
    return NetworkParams::unflatten(theta, M, K, d, static_cast<Activation>(code));
}

inline void save_params(const std::string& path, const NetworkParams& params) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw PreconditionError("cannot write checkpoint " + path);
    write_params(os, params);
}

inline NetworkParams load_params(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw PreconditionError("cannot open checkpoint " + path);
    return read_params(is);
}

} // namespace btntk

#endif
