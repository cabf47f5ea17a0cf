#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "qnf/frequency.hpp"
#include "qnf/symbol.hpp"

namespace qnf {

enum class NfMode { Quantum, Classical };

struct NormalFormResult {
    NfMode mode = NfMode::Quantum;
    int order = 0;
    double hbar = 0.0;  // 0 in classical mode
    Frequency freq;
    TruncationPolicy policy;
    std::vector<Symbol> B;  // B[k-1] = order-k normal-form coefficient, support at q=0
    std::vector<Symbol> W;  // W[k-1] = order-k generator, no q=0 atom
    std::vector<Symbol> V_terms;
    std::vector<double> norm_B, norm_W;
    std::vector<double> dropped_per_order;  // truncation ledger, rho-norm mass
    double dropped_total = 0.0;
    std::vector<std::string> warnings;
};

namespace detail {

/// Quotient t/d rounded so that multiplying back is exact: returns w within a
/// couple of ulps of t/d with fl(d*w) == t whenever such a double exists.
/// Falls back to the correctly rounded quotient if no preimage is
/// representable.
inline double exact_quotient(double t, double d) {
    double x = t / d;
    if (d * x == t) return x;
    for (double dir : {std::numeric_limits<double>::infinity(),
                       -std::numeric_limits<double>::infinity()}) {
        double y = x;
        for (int i = 0; i < 4; ++i) {
            y = std::nextafter(y, dir);
            if (d * y == t) return y;
        }
    }
    return x;
}

}  // namespace detail

namespace detail {

/// Solve {W_k, L}_M + V_k = B_k with a bit-exact recomposition: B_k is the
/// q=0 slice of V_k; since {W, L}_M = i<q,omega> W atom-wise, the q != 0
/// atoms give W_q = -V_q / (i<q,omega>). When no double W_q multiplies back
/// to V_q exactly, the V_k atom itself is moved one ulp per component onto
/// the image of multiplication by the divisor, so {W_k, L}_M = -V_{k,q}
/// holds bit-exactly against the stored V_k. The move is equivariant under
/// q -> -q and m -> -m, so the exact parity/reality relations of V_k are
/// untouched.
inline std::pair<Symbol, Symbol> solve_homological_exact(Symbol& Vk, const Frequency& f) {
    Symbol Bk, Wk;
    Bk.dim = Wk.dim = Vk.dim;
    Bk.pstep = Wk.pstep = Vk.pstep;
    for (auto& [k, c] : Vk.terms) {
        if (detail::sup_norm(k.q) == 0) {
            Bk.terms.emplace(k, c);
        } else {
            (void)small_divisor(f, k.q);  // resonance-floor validation
            double d = f.dot(k.q);
            // bracket_with_L maps (u, v) to (-fl(d v), fl(d u)); this must
            // equal -V_q = (-re c, -im c) exactly
            double u = detail::exact_quotient(-c.imag(), d);
            double v = detail::exact_quotient(c.real(), d);
            c = Complex(d * v, -(d * u));
            Wk.terms.emplace(k, Complex(u, v));
        }
    }
    return {std::move(Bk), std::move(Wk)};
}

}  // namespace detail

/// Solve {W_k, L}_M + V_k = B_k; the residual against the returned pair
/// vanishes to rounding. Inside the recursion the adjusted-V variant is used
/// so the stored V_k recomposes bit-exactly.
inline std::pair<Symbol, Symbol> solve_homological(const Symbol& Vk, const Frequency& f) {
    Symbol copy = Vk;
    return detail::solve_homological_exact(copy, f);
}

namespace detail {

using BracketFn = std::function<BracketResult(const Symbol&, const Symbol&)>;

// epsilon-graded Lie-triangle recursion. Cell (k, j) holds the epsilon^j part
// of the k-th term of the commutator expansion; V_j is assembled from cells of
// lower rows before W_j is known, then row 1 is completed with {W_j, L}.
inline NormalFormResult nf_engine(const Symbol& V, const Frequency& f, int K,
                                  const TruncationPolicy& policy, NfMode mode, double hbar,
                                  const BracketFn& bracket) {
    if (K < 1) throw std::invalid_argument("normal form: order K must be >= 1");
    NormalFormResult res;
    res.mode = mode;
    res.order = K;
    res.hbar = hbar;
    res.freq = f;
    res.policy = policy;
    if (!is_real_coeffs(V))
        res.warnings.push_back("input potential fails the reality criterion (PT broken)");
    if (parity_J(V) != Parity::Odd && !V.zero())
        res.warnings.push_back("input potential is not odd in x");

    LSymbol L{f};
    auto zero_like = [&] {
        Symbol z;
        z.dim = V.dim;
        z.pstep = V.pstep;
        return z;
    };
    // triangle[k][j], rows k = 1..K; row 0 is implicit (H_{0,0}=L, H_{0,1}=V)
    std::vector<std::vector<Symbol>> tri(K + 1, std::vector<Symbol>(K + 1, zero_like()));

    for (int j = 1; j <= K; ++j) {
        double dropped_j = 0.0;
        Symbol Vj = zero_like();
        Symbol wprev_v = zero_like();  // {W_{j-1}, V}, shared between V_j and row 1
        if (j == 1) {
            Vj = V;
        } else {
            auto br = bracket(res.W[j - 2], V);
            wprev_v = br.value;
            dropped_j += br.dropped;
            Vj = add(Vj, wprev_v);
        }
        for (int k = 2; k <= j; ++k) {
            Symbol cell = zero_like();
            for (int i = 1; i <= j - k + 1; ++i) {
                auto br = bracket(res.W[i - 1], tri[k - 1][j - i]);
                dropped_j += br.dropped;
                cell = add(cell, br.value);
            }
            tri[k][j] = scale(cell, 1.0 / k);
            Vj = add(Vj, tri[k][j]);
        }
        auto [Bj, Wj] = solve_homological_exact(Vj, f);
        tri[1][j] = add(bracket_with_L(Wj, L), wprev_v);

        res.V_terms.push_back(Vj);
        res.norm_B.push_back(rho_norm(Bj, policy.rho));
        res.norm_W.push_back(rho_norm(Wj, policy.rho));
        res.dropped_per_order.push_back(dropped_j);
        res.dropped_total += dropped_j;
        res.B.push_back(std::move(Bj));
        res.W.push_back(std::move(Wj));
    }
    return res;
}

}  // namespace detail

/// Quantum normal form of L + eps*V to order K via Moyal brackets.
inline NormalFormResult qnf(const Symbol& V, const Frequency& f, double hbar, int K,
                            const TruncationPolicy& policy) {
    if (!(hbar > 0.0 && hbar <= 1.0))
        throw std::invalid_argument("qnf: hbar must lie in (0, 1]");
    return detail::nf_engine(V, f, K, policy, NfMode::Quantum, hbar,
                             [&](const Symbol& a, const Symbol& b) {
                                 return moyal_bracket(a, b, hbar, policy, f);
                             });
}

/// Classical normal form: the same recursion with Poisson brackets.
inline NormalFormResult cnf(const Symbol& V, const Frequency& f, int K,
                            const TruncationPolicy& policy) {
    return detail::nf_engine(V, f, K, policy, NfMode::Classical, 0.0,
                             [&](const Symbol& a, const Symbol& b) {
                                 return poisson_bracket(a, b, policy, f);
                             });
}

namespace detail {

template <class Fn>
void for_each_composition(int total, int parts, std::vector<int>& buf, Fn&& fn) {
    if (parts == 1) {
        if (total >= 1) {
            buf.push_back(total);
            fn(buf);
            buf.pop_back();
        }
        return;
    }
    for (int first = 1; first <= total - (parts - 1); ++first) {
        buf.push_back(first);
        for_each_composition(total - first, parts - 1, buf, std::forward<Fn>(fn));
        buf.pop_back();
    }
}

}  // namespace detail

/// Literal nested-bracket evaluation of the order-k source term: both
/// composition sums over {W_{j1}, {W_{j2}, ..., {W_{jr}, L or V}...}}.
/// Exponential in k; used as an independent oracle for the graded recursion.
inline Symbol vk_literal(const std::vector<Symbol>& W, const Symbol& V, const Frequency& f,
                         int k, double hbar, const TruncationPolicy& policy,
                         NfMode mode = NfMode::Quantum) {
    if (k < 2) throw std::invalid_argument("vk_literal: k must be >= 2");
    if ((int)W.size() < k - 1) throw std::invalid_argument("vk_literal: missing W entries");
    auto bracket = [&](const Symbol& a, const Symbol& b) {
        return mode == NfMode::Quantum ? moyal_bracket(a, b, hbar, policy, f)
                                       : poisson_bracket(a, b, policy, f);
    };
    LSymbol L{f};
    Symbol out;
    out.dim = V.dim;
    out.pstep = V.pstep;
    std::vector<int> buf;
    double inv_fact = 1.0;
    for (int r = 2; r <= k; ++r) {
        inv_fact = 1.0;
        for (int i = 2; i <= r; ++i) inv_fact /= i;
        detail::for_each_composition(k, r, buf, [&](const std::vector<int>& js) {
            Symbol acc = bracket_with_L(W[js[r - 1] - 1], L);
            for (int s = r - 2; s >= 0; --s) acc = bracket(W[js[s] - 1], acc).value;
            out = add(out, scale(acc, inv_fact));
        });
    }
    for (int r = 1; r <= k - 1; ++r) {
        inv_fact = 1.0;
        for (int i = 2; i <= r; ++i) inv_fact /= i;
        detail::for_each_composition(k - 1, r, buf, [&](const std::vector<int>& js) {
            Symbol acc = bracket(W[js[r - 1] - 1], V).value;
            for (int s = r - 2; s >= 0; --s) acc = bracket(W[js[s] - 1], acc).value;
            out = add(out, scale(acc, inv_fact));
        });
    }
    return out;
}

struct ConvergenceDiagnostics {
    std::vector<double> norms;         // ||B_k|| at the requested rho
    std::vector<double> roots;         // ||B_k||^{1/k}, 0 for vanishing orders
    std::vector<double> ledger_share;  // dropped_k / total dropped
    double radius = 0.0;
    bool radius_infinite = false;
    bool low_confidence = false;
};

/// Empirical ratio/root convergence test on the computed ||B_k|| sequence;
/// radius = 1 / max_k ||B_k||^{1/k} over the nonzero orders.
inline ConvergenceDiagnostics convergence_diagnostics(const NormalFormResult& r, double rho) {
    ConvergenceDiagnostics d;
    int nonzero = 0;
    double max_root = 0.0;
    for (int k = 1; k <= r.order; ++k) {
        double n = rho_norm(r.B[k - 1], rho);
        d.norms.push_back(n);
        double root = n > 0.0 ? std::pow(n, 1.0 / k) : 0.0;
        d.roots.push_back(root);
        if (n > 0.0) {
            ++nonzero;
            max_root = std::max(max_root, root);
        }
        d.ledger_share.push_back(
            r.dropped_total > 0.0 ? r.dropped_per_order[k - 1] / r.dropped_total : 0.0);
    }
    if (max_root == 0.0) {
        d.radius = std::numeric_limits<double>::infinity();
        d.radius_infinite = true;
    } else {
        d.radius = 1.0 / max_root;
    }
    d.low_confidence = nonzero < 4;
    return d;
}

}  // namespace qnf
