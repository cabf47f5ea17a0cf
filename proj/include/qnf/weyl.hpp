#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "qnf/frequency.hpp"
#include "qnf/symbol.hpp"

namespace qnf {

/// Truncated Fourier basis {e^{i<n,x>} : |n|_inf <= N}, flattened
/// lexicographically in (n_1, ..., n_l). Rows/cols with |n|_inf <= N - margin
/// form the truncation-clean interior block.
struct BasisWindow {
    int dim = 0;
    int ncut = 0;
    int margin = 0;

    BasisWindow() = default;
    BasisWindow(int l, int N, int m) : dim(l), ncut(N), margin(m) {
        if (N < 1) throw std::invalid_argument("BasisWindow: ncut must be >= 1");
        if (m < 0 || m >= N) throw std::invalid_argument("BasisWindow: need 0 <= margin < ncut");
    }

    std::size_t size() const {
        std::size_t s = 1;
        for (int i = 0; i < dim; ++i) s *= std::size_t(2 * ncut + 1);
        return s;
    }

    bool contains(const IntVec& n) const { return detail::sup_norm(n) <= ncut; }
    bool interior(const IntVec& n) const { return detail::sup_norm(n) <= ncut - margin; }

    std::size_t index(const IntVec& n) const {
        std::size_t idx = 0;
        for (int i = 0; i < dim; ++i) idx = idx * std::size_t(2 * ncut + 1) + std::size_t(n[i] + ncut);
        return idx;
    }

    IntVec multi_index(std::size_t idx) const {
        IntVec n(dim);
        for (int i = dim - 1; i >= 0; --i) {
            n[i] = int(idx % std::size_t(2 * ncut + 1)) - ncut;
            idx /= std::size_t(2 * ncut + 1);
        }
        return n;
    }

    template <class Fn>
    void for_each(Fn&& fn) const {
        IntVec n(dim, -ncut);
        detail::for_each_q(dim, ncut, n, 0, std::forward<Fn>(fn));
    }
};

struct OperatorMatrix {
    BasisWindow window;
    Eigen::MatrixXcd entries;
};

/// Weyl quantization of an atomic symbol on the truncated basis: the atom
/// (q, m, c) contributes c * exp(i m delta hbar (<omega,n> + <omega,q>/2)) to
/// the entry (n+q, n) — the midpoint rule.
inline OperatorMatrix matrix_of_symbol(const Symbol& F, double hbar, const BasisWindow& w,
                                       const Frequency& f) {
    if (F.dim != w.dim) throw std::invalid_argument("matrix_of_symbol: dimension mismatch");
    for (const auto& [k, c] : F.terms)
        if (detail::sup_norm(k.q) > 2 * w.ncut)
            throw std::invalid_argument("matrix_of_symbol: q-support " + ivec_str(k.q) +
                                        " exceeds the window shifts of N=" + std::to_string(w.ncut));
    OperatorMatrix M{w, Eigen::MatrixXcd::Zero(Eigen::Index(w.size()), Eigen::Index(w.size()))};
    w.for_each([&](const IntVec& n) {
        double wn = f.dot(n);
        std::size_t col = w.index(n);
        IntVec row_n(w.dim);
        for (const auto& [k, c] : F.terms) {
            for (int i = 0; i < w.dim; ++i) row_n[i] = n[i] + k.q[i];
            if (!w.contains(row_n)) continue;
            double phase = k.m * F.pstep * hbar * (wn + 0.5 * f.dot(k.q));
            M.entries(Eigen::Index(w.index(row_n)), Eigen::Index(col)) +=
                c * std::exp(Complex(0.0, phase));
        }
    });
    return M;
}

/// Diagonal matrix of L(omega,hbar): entry (n,n) = hbar <omega,n>.
inline OperatorMatrix matrix_of_L(double hbar, const BasisWindow& w, const Frequency& f) {
    OperatorMatrix M{w, Eigen::MatrixXcd::Zero(Eigen::Index(w.size()), Eigen::Index(w.size()))};
    w.for_each([&](const IntVec& n) {
        std::size_t i = w.index(n);
        M.entries(Eigen::Index(i), Eigen::Index(i)) = hbar * f.dot(n);
    });
    return M;
}

inline OperatorMatrix assemble_H(const Symbol& V, double eps, double hbar, const BasisWindow& w,
                                 const Frequency& f) {
    OperatorMatrix M = matrix_of_L(hbar, w, f);
    M.entries += eps * matrix_of_symbol(V, hbar, w, f).entries;
    return M;
}

inline std::vector<Complex> eigenvalues(const OperatorMatrix& M) {
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(M.entries, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigenvalues: dense eigensolver failed to converge");
    std::vector<Complex> ev(std::size_t(M.entries.rows()));
    for (Eigen::Index i = 0; i < M.entries.rows(); ++i) ev[std::size_t(i)] = solver.eigenvalues()(i);
    return ev;
}

using ComplexLD = std::complex<long double>;

/// Extended-precision eigenvalues (80-bit on x86). The entries are cast from
/// double, so this sharpens only the solver noise (~1e-13 absolute on a
/// 400-row matrix), which otherwise masks residuals near 1e-15.
inline std::vector<ComplexLD> eigenvalues_refined(const OperatorMatrix& M) {
    using MatLD = Eigen::Matrix<ComplexLD, Eigen::Dynamic, Eigen::Dynamic>;
    MatLD H = M.entries.cast<ComplexLD>();
    Eigen::ComplexEigenSolver<MatLD> solver(H, /*computeEigenvectors=*/false);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("eigenvalues_refined: dense eigensolver failed to converge");
    std::vector<ComplexLD> ev(std::size_t(H.rows()));
    for (Eigen::Index i = 0; i < H.rows(); ++i) ev[std::size_t(i)] = solver.eigenvalues()(i);
    return ev;
}

namespace detail {

inline std::vector<Eigen::Index> interior_indices(const BasisWindow& w) {
    std::vector<Eigen::Index> idx;
    w.for_each([&](const IntVec& n) {
        if (w.interior(n)) idx.push_back(Eigen::Index(w.index(n)));
    });
    return idx;
}

inline Eigen::MatrixXcd interior_block(const OperatorMatrix& M) {
    auto idx = interior_indices(M.window);
    Eigen::MatrixXcd B(Eigen::Index(idx.size()), Eigen::Index(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < idx.size(); ++j)
            B(Eigen::Index(i), Eigen::Index(j)) = M.entries(idx[i], idx[j]);
    return B;
}

inline int q_spread(const Symbol& F) {
    int s = 0;
    for (const auto& [k, c] : F.terms) s = std::max(s, sup_norm(k.q));
    return s;
}

}  // namespace detail

/// Relative Frobenius residual between Mat({F,G}_M) and the scaled commutator
/// (Mat F Mat G - Mat G Mat F)/(i hbar), restricted to the interior block.
inline double commutator_symbol_check(const Symbol& F, const Symbol& G, double hbar,
                                      const BasisWindow& w, const Frequency& f) {
    if (hbar <= 0.0) throw std::invalid_argument("commutator_symbol_check: hbar must be > 0");
    if (w.margin < detail::q_spread(F) + detail::q_spread(G))
        throw std::invalid_argument("commutator_symbol_check: margin smaller than combined q-spread");
    TruncationPolicy exact;
    exact.eta = 0.0;
    exact.eta_relative = false;
    exact.qmax = 4 * w.ncut;
    exact.mmax = 1 << 20;
    Symbol mb = moyal_bracket(F, G, hbar, exact, f).value;
    OperatorMatrix Mb = matrix_of_symbol(mb, hbar, w, f);
    Eigen::MatrixXcd MF = matrix_of_symbol(F, hbar, w, f).entries;
    Eigen::MatrixXcd MG = matrix_of_symbol(G, hbar, w, f).entries;
    OperatorMatrix Comm{w, (MF * MG - MG * MF) / Complex(0.0, hbar)};
    Eigen::MatrixXcd lhs = detail::interior_block(Mb);
    Eigen::MatrixXcd rhs = detail::interior_block(Comm);
    double den = rhs.norm();
    double num = (lhs - rhs).norm();
    return den > 1e-300 ? num / den : num;
}

/// Residual of [Mat(V), PT] applied to the basis: in the Fourier basis PT acts
/// as plain conjugation of coefficient vectors, so the commutator vanishes iff
/// the matrix is real.
inline double pt_symmetry_check(const Symbol& V, const BasisWindow& w, const Frequency& f,
                                double hbar = 1.0) {
    OperatorMatrix M = matrix_of_symbol(V, hbar, w, f);
    double den = M.entries.norm();
    double num = (M.entries - M.entries.conjugate()).norm();
    return den > 1e-300 ? num / den : 0.0;
}

inline double spectral_norm(const OperatorMatrix& M) {
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(M.entries);
    return svd.singularValues()(0);
}

inline double hermiticity_residual(const OperatorMatrix& M) {
    double den = M.entries.norm();
    double num = (M.entries - M.entries.adjoint()).norm();
    return den > 1e-300 ? num / den : 0.0;
}

}  // namespace qnf
