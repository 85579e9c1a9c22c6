#ifndef DOSIM_LINALG_HPP
#define DOSIM_LINALG_HPP

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dosim {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using SparseMat = Eigen::SparseMatrix<double>;

// Kronecker product A (x) B, dense.
inline MatrixXd kron(const MatrixXd& a, const MatrixXd& b) {
    MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// Applies (M (x) I_n) to a stacked vector of M.cols() blocks of size n,
// without materializing the lifted matrix. For v = col(v_k) this returns
// col(sum_k M(i,k) v_k).
inline VectorXd apply_lifted(const MatrixXd& m, const VectorXd& v, int n) {
    if (v.size() != m.cols() * n) {
        throw std::invalid_argument("apply_lifted: vector size mismatch");
    }
    if (n == 1) return m * v;
    Eigen::Map<const MatrixXd> blocks(v.data(), n, m.cols());
    MatrixXd out = blocks * m.transpose();  // column i = sum_k M(i,k) v_k
    return Eigen::Map<const VectorXd>(out.data(), out.size());
}

inline VectorXd apply_lifted(const SparseMat& m, const VectorXd& v, int n) {
    if (v.size() != m.cols() * n) {
        throw std::invalid_argument("apply_lifted: vector size mismatch");
    }
    if (n == 1) return m * v;
    Eigen::Map<const MatrixXd> blocks(v.data(), n, m.cols());
    MatrixXd out = (m * blocks.transpose()).transpose();
    return Eigen::Map<const VectorXd>(out.data(), out.size());
}

// Numeric rank with singular values below tol_factor * sigma_max counted as zero.
inline int numeric_rank(const MatrixXd& m, double tol_factor = 1e-10) {
    if (m.rows() == 0 || m.cols() == 0) return 0;
    Eigen::JacobiSVD<MatrixXd> svd(m);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0) return 0;
    const double thresh = tol_factor * sv(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) {
        if (sv(i) > thresh) ++rank;
    }
    return rank;
}

inline int numeric_nullity(const MatrixXd& m, double tol_factor = 1e-10) {
    return static_cast<int>(m.cols()) - numeric_rank(m, tol_factor);
}

// Smallest eigenvalue of the symmetric part (M + M^T)/2.
inline double symmetric_lambda_min(const MatrixXd& m) {
    MatrixXd s = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double symmetric_lambda_max(const MatrixXd& m) {
    MatrixXd s = 0.5 * (m + m.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

// FNV-1a over a byte string; used to stamp output files with a config hash.
inline std::uint64_t fnv1a_hash(const std::string& data) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace dosim

#endif
