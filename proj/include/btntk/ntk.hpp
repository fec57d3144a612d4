#ifndef BTNTK_NTK_HPP
#define BTNTK_NTK_HPP

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>

#include "btntk/common.hpp"
#include "btntk/data.hpp"
#include "btntk/network.hpp"

namespace btntk {

/// Empirical NTK over P points, as a PK x PK matrix. Row/column p*K + k belongs to output k at
/// point p; for a dataset the points are [anchors; augments], matching RepGradient.
struct NTKMatrix {
    Mat value;
    Index K = 1;

    Index points() const { return value.rows() / K; }
    /// The K x K block K(x_p, x_q).
    auto block(Index p, Index q) const { return value.block(p * K, q * K, K, K); }
};

/// Matrix-valued kernel K_theta(a, b) with entries
///   (1/M) sum_m [k == l] phi(v_m.a) phi(v_m.b) + (1/M) sum_m w_mk w_ml phi'(v_m.a) phi'(v_m.b) a.b
inline Mat ntk_entry(const NetworkParams& params, const Vec& a, const Vec& b) {
    require_shape(a.size() == params.input_dim() && b.size() == params.input_dim(), "input dimension mismatch");
    const Index M = params.width(), K = params.embed_dim();
    const double ab = a.dot(b);
    Mat out = Mat::Zero(K, K);
    double diag = 0.0;
    for (Index m = 0; m < M; ++m) {
        const double pa = params.V.row(m).dot(a);
        const double pb = params.V.row(m).dot(b);
        diag += activate(params.activation, pa) * activate(params.activation, pb);
        const double dd = activate_derivative(params.activation, pa) * activate_derivative(params.activation, pb);
        if (dd != 0.0)
            out.noalias() += (dd * ab) * params.W.row(m).transpose() * params.W.row(m);
    }
    out.diagonal().array() += diag;
    return out / double(M);
}

/// Kernel between two point sets given their hidden-layer caches. Result is (P_a K) x (P_b K).
inline Mat ntk_cross(const NetworkParams& params, const Mat& inputs_a, const ForwardCache& ca, const Mat& inputs_b,
                     const ForwardCache& cb) {
    const Index M = params.width(), K = params.embed_dim();
    const Index Pa = inputs_a.rows(), Pb = inputs_b.rows();
    const Mat act_gram = ca.act * cb.act.transpose() / double(M);
    const Mat input_gram = inputs_a * inputs_b.transpose();

    // Row p*K + k of Z is phi'(V x_p) (elementwise) w_{:,k}.
    auto weighted = [&](const ForwardCache& c, Index P) {
        Mat Z(P * K, M);
        for (Index p = 0; p < P; ++p)
            for (Index k = 0; k < K; ++k)
                Z.row(p * K + k) = c.dact.row(p).cwiseProduct(params.W.col(k).transpose());
        return Z;
    };
    const Mat Za = weighted(ca, Pa);
    const Mat Zb = weighted(cb, Pb);
    Mat out(Pa * K, Pb * K);
    out.noalias() = Za * Zb.transpose() / double(M);
    for (Index p = 0; p < Pa; ++p)
        for (Index q = 0; q < Pb; ++q) {
            out.block(p * K, q * K, K, K) *= input_gram(p, q);
            out.block(p * K, q * K, K, K).diagonal().array() += act_gram(p, q);
        }
    return out;
}

/// NTK over an arbitrary list of points (one per row).
inline NTKMatrix assemble_points(const NetworkParams& params, const Mat& inputs) {
    const ForwardCache c = forward_cache(params, inputs);
    NTKMatrix K{ntk_cross(params, inputs, c, inputs, c), params.embed_dim()};
    // Exact symmetry; the two triangles are computed by the same products in different order.
    K.value = 0.5 * (K.value + K.value.transpose()).eval();
    return K;
}

/// The 2NK x 2NK kernel over [anchors; augments].
inline NTKMatrix assemble(const NetworkParams& params, const PairedDataset& data) {
    return assemble_points(params, data.stacked());
}

struct Drift {
    double absolute = 0.0;
    double relative = 0.0;
};

/// Frobenius distance between kernels, absolute and relative to ||K0||_F.
inline Drift drift(const NTKMatrix& K0, const NTKMatrix& Kt) {
    require_shape(K0.value.rows() == Kt.value.rows() && K0.value.cols() == Kt.value.cols(),
                  "kernels differ in shape");
    Drift d;
    d.absolute = (Kt.value - K0.value).norm();
    const double base = K0.value.norm();
    d.relative = base > 0.0 ? d.absolute / base : (d.absolute == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    return d;
}

inline void require_symmetric(const Mat& A, double rel_tol = 1e-10) {
    require_shape(A.rows() == A.cols(), "matrix must be square");
    const double scale = A.norm();
    if ((A - A.transpose()).norm() > rel_tol * (scale > 0.0 ? scale : 1.0))
        throw InvariantError("matrix is not symmetric within tolerance");
}

/// Smallest eigenvalue of a symmetric matrix, computed on (A + A^T)/2.
inline double min_eigenvalue(const Mat& A) {
    require_symmetric(A);
    Eigen::SelfAdjointEigenSolver<Mat> solver(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

inline double min_eigenvalue(const NTKMatrix& K) { return min_eigenvalue(K.value); }

/// Largest eigenvalue, i.e. the spectral norm of a PSD kernel matrix.
inline double max_eigenvalue(const Mat& A) {
    require_symmetric(A);
    Eigen::SelfAdjointEigenSolver<Mat> solver(0.5 * (A + A.transpose()), Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(solver.eigenvalues().size() - 1);
}

inline double quadratic_form(const NTKMatrix& K, const Vec& u) {
    require_shape(u.size() == K.value.rows(), "vector length does not match kernel");
    return u.dot(K.value * u);
}

// Dense dump: u64 rows, u64 cols, then rows*cols little-endian doubles in row-major order.

inline void write_matrix(std::ostream& os, const Mat& A) {
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(A.rows()));
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(A.cols()));
    for (Index i = 0; i < A.rows(); ++i)
        for (Index j = 0; j < A.cols(); ++j)
            io::write_le<double>(os, A(i, j));
}

inline Mat read_matrix(std::istream& is) {
    const auto rows = static_cast<Index>(io::read_le<std::uint64_t>(is));
    const auto cols = static_cast<Index>(io::read_le<std::uint64_t>(is));
    Mat A(rows, cols);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            A(i, j) = io::read_le<double>(is);
    return A;
}

inline void save_matrix(const std::string& path, const Mat& A) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw PreconditionError("cannot write matrix file " + path);
    write_matrix(os, A);
}

inline Mat load_matrix(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw PreconditionError("cannot open matrix file " + path);
    return read_matrix(is);
}

} // namespace btntk

#endif
