#pragma once

#include <algorithm>
#include <cmath>
#include <compare>
#include <complex>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "qnf/frequency.hpp"

namespace qnf {

/// Index of one Fourier atom: angular mode q in Z^l, p-grid index m
/// (p = m * pstep on the conjugate axis).
struct AtomKey {
    IntVec q;
    int m = 0;
    auto operator<=>(const AtomKey&) const = default;
};

struct TruncationPolicy {
    double eta = 1e-14;       // amplitude threshold
    bool eta_relative = true; // threshold taken as eta * max|c| of the pruned symbol
    int qmax = 64;            // cap on |q|_inf
    int mmax = 64;            // cap on |m|
    double rho = 3.0;         // norm weight, > 2
};

enum class Parity { Even, Odd, None };

/// Sparse exponential sum F(xi,x) = sum c_{q,m} exp(i(m*delta*<omega,xi> + <q,x>)).
/// The p-transform of each angular coefficient F_q is the atomic measure
/// sum_m c_{q,m} delta(p - m*delta); all (2pi)^{+-l/2} factors are absorbed.
struct Symbol {
    int dim = 0;
    double pstep = 1.0;
    std::map<AtomKey, Complex> terms;

    bool zero() const { return terms.empty(); }

    Complex coeff(const AtomKey& k) const {
        auto it = terms.find(k);
        return it == terms.end() ? Complex(0.0) : it->second;
    }

    void insert(const AtomKey& k, Complex c) {
        if (c == Complex(0.0)) return;
        auto [it, fresh] = terms.emplace(k, c);
        if (!fresh) {
            it->second += c;
            if (it->second == Complex(0.0)) terms.erase(it);
        }
    }
};

/// Tag for L_omega(xi) = <omega,xi>: not in the atomic class (its p-transform
/// is a derivative of a delta); brackets against it use the exact linear rule.
struct LSymbol {
    Frequency frequency;
};

struct PotentialSpec {
    struct Generator {
        IntVec q;
        int m = 0;
        double amplitude = 0.0;
    };
    int dim = 0;
    double pstep = 1.0;
    std::vector<Generator> generators;
};

namespace detail {

inline void check_compatible(const Symbol& a, const Symbol& b) {
    if (a.dim != b.dim || a.pstep != b.pstep)
        throw std::invalid_argument("symbol dim/pstep mismatch");
}

inline IntVec negate(const IntVec& q) {
    IntVec r(q.size());
    for (std::size_t i = 0; i < q.size(); ++i) r[i] = -q[i];
    return r;
}

inline int l1_norm(const IntVec& q) {
    int s = 0;
    for (int v : q) s += std::abs(v);
    return s;
}

// Lexicographic max of (q, -q); invariant under q -> -q.
inline IntVec canon(const IntVec& q) {
    IntVec n = negate(q);
    return std::max(q, n);
}

}  // namespace detail

/// Symmetry completion of a generator list: each (q, m, a) expands to the
/// four atoms (+-q, +-m) with c_{q,-m} = c_{q,m} (F_q real, even in p) and
/// c_{-q,m} = -c_{q,m} (odd in x), each weighted a/4.
inline Symbol build_potential(const PotentialSpec& spec) {
    Symbol out;
    out.dim = spec.dim;
    out.pstep = spec.pstep;
    for (const auto& g : spec.generators) {
        if ((int)g.q.size() != spec.dim)
            throw std::invalid_argument("build_potential: generator q has wrong dimension");
        if (detail::sup_norm(g.q) == 0)
            throw std::invalid_argument(
                "build_potential: generator with q=0 (oddness in x forces the q=0 "
                "coefficient of the potential to vanish)");
        double a4 = g.amplitude / 4.0;
        IntVec nq = detail::negate(g.q);
        out.insert({g.q, g.m}, Complex(a4));
        out.insert({g.q, -g.m}, Complex(a4));
        out.insert({nq, g.m}, Complex(-a4));
        out.insert({nq, -g.m}, Complex(-a4));
    }
    return out;
}

inline Symbol add(const Symbol& F, const Symbol& G) {
    detail::check_compatible(F, G);
    Symbol out = F;
    for (const auto& [k, c] : G.terms) out.insert(k, c);
    return out;
}

inline Symbol scale(const Symbol& F, Complex a) {
    Symbol out;
    out.dim = F.dim;
    out.pstep = F.pstep;
    if (a == Complex(0.0)) return out;
    for (const auto& [k, c] : F.terms) out.terms.emplace(k, a * c);
    return out;
}

/// rho-norm: sum over atoms of exp(rho*|q|_1) * exp(rho*|m*delta|) * |c|.
inline double rho_norm(const Symbol& F, double rho) {
    if (rho < 0.0) throw std::invalid_argument("rho_norm: rho must be >= 0");
    double s = 0.0;
    for (const auto& [k, c] : F.terms)
        s += std::exp(rho * detail::l1_norm(k.q)) *
             std::exp(rho * std::abs(k.m * F.pstep)) * std::abs(c);
    return s;
}

inline double max_abs_coeff(const Symbol& F) {
    double m = 0.0;
    for (const auto& [k, c] : F.terms) m = std::max(m, std::abs(c));
    return m;
}

struct TruncateResult {
    Symbol value;
    double dropped = 0.0;  // rho-norm mass of the removed atoms
};

inline TruncateResult truncate(const Symbol& F, const TruncationPolicy& policy) {
    double thr = policy.eta_relative ? policy.eta * max_abs_coeff(F) : policy.eta;
    TruncateResult res;
    res.value.dim = F.dim;
    res.value.pstep = F.pstep;
    Symbol removed;
    removed.dim = F.dim;
    removed.pstep = F.pstep;
    for (const auto& [k, c] : F.terms) {
        bool keep = std::abs(c) >= thr && detail::sup_norm(k.q) <= policy.qmax &&
                    std::abs(k.m) <= policy.mmax;
        (keep ? res.value : removed).terms.emplace(k, c);
    }
    res.dropped = rho_norm(removed, policy.rho);
    return res;
}

struct BracketResult {
    Symbol value;
    double dropped = 0.0;
};

namespace detail {

// One bilinear pairing contribution, with a summation key that is invariant
// under the global mirrors q -> -q and m -> -m of the inputs. Contributions
// sharing a key are grouped; exact +-v pairs inside a group cancel to a true
// zero, and group totals are summed in key order. This makes the parity
// relations of the bracket (and the vanishing of odd-order q=0 coefficients
// downstream) hold bit-exactly, not just to rounding.
struct Contribution {
    IntVec cqF;
    int amF;
    IntVec cqG;
    int amG;
    Complex value;
    bool operator<(const Contribution& o) const {
        return std::tie(cqF, amF, cqG, amG) < std::tie(o.cqF, o.amF, o.cqG, o.amG);
    }
    bool same_group(const Contribution& o) const {
        return std::tie(cqF, amF, cqG, amG) == std::tie(o.cqF, o.amF, o.cqG, o.amG);
    }
};

inline Complex sum_group(std::vector<Complex>& vals) {
    // cancel exact negation pairs first (groups are tiny, quadratic is fine)
    for (std::size_t i = 0; i < vals.size(); ++i) {
        if (vals[i] == Complex(0.0)) continue;
        for (std::size_t j = i + 1; j < vals.size(); ++j) {
            if (vals[j] == -vals[i]) {
                vals[i] = vals[j] = Complex(0.0);
                break;
            }
        }
    }
    std::sort(vals.begin(), vals.end(), [](Complex a, Complex b) {
        return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    });
    Complex s = 0.0;
    for (Complex v : vals) s += v;
    return s;
}

template <class Amp>
BracketResult convolve_bracket(const Symbol& F, const Symbol& G,
                               const TruncationPolicy& policy, Amp&& amplitude) {
    check_compatible(F, G);
    std::map<AtomKey, std::vector<Contribution>> acc;
    for (const auto& [kf, cf] : F.terms) {
        for (const auto& [kg, cg] : G.terms) {
            Complex v = amplitude(kf, cf, kg, cg);
            if (v == Complex(0.0)) continue;
            IntVec qo(F.dim);
            for (int i = 0; i < F.dim; ++i) qo[i] = kf.q[i] + kg.q[i];
            acc[{std::move(qo), kf.m + kg.m}].push_back(
                {canon(kf.q), std::abs(kf.m), canon(kg.q), std::abs(kg.m), v});
        }
    }
    Symbol raw;
    raw.dim = F.dim;
    raw.pstep = F.pstep;
    std::vector<Complex> group;
    for (auto& [k, contribs] : acc) {
        std::sort(contribs.begin(), contribs.end());
        Complex s = 0.0;
        std::size_t i = 0;
        while (i < contribs.size()) {
            group.clear();
            std::size_t j = i;
            while (j < contribs.size() && contribs[j].same_group(contribs[i]))
                group.push_back(contribs[j++].value);
            s += sum_group(group);
            i = j;
        }
        if (s != Complex(0.0)) raw.terms.emplace(k, s);
    }
    auto tr = truncate(raw, policy);
    return {std::move(tr.value), tr.dropped};
}

}  // namespace detail

/// Moyal bracket of two atomic symbols: the pair of atoms (qF,mF), (qG,mG)
/// contributes (2/hbar) cF cG sin((hbar*delta/2)(mF<omega,qG> - mG<omega,qF>))
/// at (qF+qG, mF+mG). This is the sin[(hbar/2)(.)] convention; it reproduces
/// the Poisson bracket as hbar -> 0 and is validated against the matrix
/// commutator oracle.
inline BracketResult moyal_bracket(const Symbol& F, const Symbol& G, double hbar,
                                   const TruncationPolicy& policy, const Frequency& f) {
    if (hbar <= 0.0)
        throw std::invalid_argument("moyal_bracket: hbar must be > 0 (use poisson_bracket)");
    double half = 0.5 * hbar * F.pstep;
    double pref = 2.0 / hbar;
    return detail::convolve_bracket(
        F, G, policy, [&](const AtomKey& kf, Complex cf, const AtomKey& kg, Complex cg) {
            double theta = half * (kf.m * f.dot(kg.q) - kg.m * f.dot(kf.q));
            return pref * cf * cg * std::sin(theta);
        });
}

/// Poisson bracket: the hbar -> 0 limit of the Moyal pairing; the sine is
/// replaced by its argument, the prefactor by delta.
inline BracketResult poisson_bracket(const Symbol& F, const Symbol& G,
                                     const TruncationPolicy& policy, const Frequency& f) {
    double d = F.pstep;
    return detail::convolve_bracket(
        F, G, policy, [&](const AtomKey& kf, Complex cf, const AtomKey& kg, Complex cg) {
            return d * (kf.m * f.dot(kg.q) - kg.m * f.dot(kf.q)) * cf * cg;
        });
}

/// {F, L_omega}_M = {F, L_omega}: each atom (q, m, c) maps to
/// (q, m, +i<q,omega> c). Exact, support-preserving; the sign follows the
/// bracket orientation fixed by the matrix commutator (an atom at shift q
/// commutes against the diagonal <omega,n> to [F,L]/(i hbar) = i<q,omega> F).
inline Symbol bracket_with_L(const Symbol& F, const LSymbol& L) {
    Symbol out;
    out.dim = F.dim;
    out.pstep = F.pstep;
    for (const auto& [k, c] : F.terms) {
        Complex v = Complex(0.0, L.frequency.dot(k.q)) * c;
        if (v != Complex(0.0)) out.terms.emplace(k, v);
    }
    return out;
}

/// x-parity classification: even iff c_{-q,m} = c_{q,m} for all atoms, odd iff
/// c_{-q,m} = -c_{q,m}. The zero symbol classifies as Even.
inline Parity parity_J(const Symbol& F, double tol = 0.0) {
    bool even = true, odd = true;
    for (const auto& [k, c] : F.terms) {
        Complex mirror = F.coeff({detail::negate(k.q), k.m});
        if (std::abs(mirror - c) > tol) even = false;
        if (std::abs(mirror + c) > tol) odd = false;
        if (!even && !odd) return Parity::None;
    }
    return even ? Parity::Even : Parity::Odd;
}

/// Violation of the reality criterion conj(c_{q,m}) = c_{q,-m}, relative to
/// the total atom mass. Zero symbol -> 0.
inline double reality_residual(const Symbol& F) {
    double num = 0.0, den = 0.0;
    for (const auto& [k, c] : F.terms) {
        num += std::abs(std::conj(c) - F.coeff({k.q, -k.m}));
        den += std::abs(c);
    }
    return den == 0.0 ? 0.0 : num / (2.0 * den);
}

/// Violation of conj(c_{q,m}) = -c_{q,-m} (purely imaginary F_q).
inline double imaginarity_residual(const Symbol& F) {
    double num = 0.0, den = 0.0;
    for (const auto& [k, c] : F.terms) {
        num += std::abs(std::conj(c) + F.coeff({k.q, -k.m}));
        den += std::abs(c);
    }
    return den == 0.0 ? 0.0 : num / (2.0 * den);
}

inline bool is_real_coeffs(const Symbol& F, double tol = 1e-12) {
    return reality_residual(F) <= tol;
}

inline bool is_imag_coeffs(const Symbol& F, double tol = 1e-12) {
    return imaginarity_residual(F) <= tol;
}

/// F_q(xi) = sum_m c_{q,m} exp(i m delta <omega,xi>).
inline Complex fourier_coeff(const Symbol& F, const IntVec& q, const std::vector<double>& xi,
                             const Frequency& f) {
    if ((int)xi.size() != F.dim) throw std::invalid_argument("fourier_coeff: xi dimension mismatch");
    double t = 0.0;
    for (int i = 0; i < F.dim; ++i) t += f.omega[i] * xi[i];
    Complex s = 0.0;
    for (const auto& [k, c] : F.terms)
        if (k.q == q) s += c * std::exp(Complex(0.0, k.m * F.pstep * t));
    return s;
}

/// F_q evaluated at the scalar action t = <omega,xi>.
inline Complex fourier_coeff_at(const Symbol& F, const IntVec& q, double t) {
    Complex s = 0.0;
    for (const auto& [k, c] : F.terms)
        if (k.q == q) s += c * std::exp(Complex(0.0, k.m * F.pstep * t));
    return s;
}

inline Complex evaluate(const Symbol& F, const std::vector<double>& xi,
                        const std::vector<double>& x, const Frequency& f) {
    if ((int)xi.size() != F.dim || (int)x.size() != F.dim)
        throw std::invalid_argument("evaluate: dimension mismatch");
    double t = 0.0;
    for (int i = 0; i < F.dim; ++i) t += f.omega[i] * xi[i];
    Complex s = 0.0;
    for (const auto& [k, c] : F.terms) {
        double phase = k.m * F.pstep * t;
        for (int i = 0; i < F.dim; ++i) phase += k.q[i] * x[i];
        s += c * std::exp(Complex(0.0, phase));
    }
    return s;
}

/// Flat record serialization: header (l, delta, count), then one line per atom
/// "q1 ... ql m re im", lexicographically sorted.
inline void write_symbol(std::ostream& os, const Symbol& F) {
    os << "symbol l " << F.dim << " delta " << std::setprecision(17) << F.pstep << " atoms "
       << F.terms.size() << "\n";
    for (const auto& [k, c] : F.terms) {
        for (int v : k.q) os << v << ' ';
        os << k.m << ' ' << std::setprecision(17) << c.real() << ' ' << c.imag() << "\n";
    }
}

inline Symbol read_symbol(std::istream& is) {
    std::string tag, word;
    Symbol F;
    std::size_t count = 0;
    is >> tag;
    if (tag != "symbol") throw std::runtime_error("read_symbol: bad header");
    is >> word >> F.dim >> word >> F.pstep >> word >> count;
    for (std::size_t i = 0; i < count; ++i) {
        AtomKey k;
        k.q.resize(F.dim);
        double re, im;
        for (int j = 0; j < F.dim; ++j) is >> k.q[j];
        is >> k.m >> re >> im;
        F.terms.emplace(std::move(k), Complex(re, im));
    }
    if (!is) throw std::runtime_error("read_symbol: truncated record list");
    return F;
}

}  // namespace qnf
