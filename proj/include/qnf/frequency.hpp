#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace qnf {

using Complex = std::complex<double>;
using IntVec = std::vector<int>;

inline std::string ivec_str(const IntVec& q) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < q.size(); ++i) os << (i ? "," : "") << q[i];
    os << ')';
    return os.str();
}

/// Thrown when a homological division hits a (near-)resonant denominator.
struct ResonanceError : std::runtime_error {
    IntVec q;
    explicit ResonanceError(IntVec qq, double val)
        : std::runtime_error("resonant small divisor at q=" + ivec_str(qq) +
                             ": |<q,omega>|=" + std::to_string(val)),
          q(std::move(qq)) {}
};

/// Diophantine frequency vector omega with constants (gamma, tau):
/// |<omega,q>|^-1 <= gamma |q|^tau for all integer q != 0 (|q| = sup norm).
struct Frequency {
    int dim = 0;
    std::vector<double> omega;
    double gamma = 0.0;
    double tau = 0.0;
    double resonance_floor = 1e-12;

    double dot(const IntVec& q) const {
        double s = 0.0;
        for (int i = 0; i < dim; ++i) s += omega[i] * q[i];
        return s;
    }
};

struct DiophantineReport {
    int qmax = 0;
    IntVec worst_q;
    double min_product = 0.0;   // min |<omega,q>| * |q|^tau over 0 < |q| <= qmax
    double implied_gamma = 0.0; // 1 / min_product
    bool declared_gamma_ok = false;
    bool resonance_found = false;
    // gamma * tau^tau * (tau+2)^(4(tau+2)) < 1/2, reported but never enforced
    double smallness_value = 0.0;
    bool smallness_ok = false;
};

namespace detail {

// Enumerate all q in [-qmax, qmax]^dim, calling fn(q).
template <class Fn>
void for_each_q(int dim, int qmax, IntVec& q, int pos, Fn&& fn) {
    if (pos == dim) {
        fn(q);
        return;
    }
    for (int v = -qmax; v <= qmax; ++v) {
        q[pos] = v;
        for_each_q(dim, qmax, q, pos + 1, fn);
    }
}

inline int sup_norm(const IntVec& q) {
    int n = 0;
    for (int v : q) n = std::max(n, std::abs(v));
    return n;
}

}  // namespace detail

inline double smallness_constant(double gamma, double tau) {
    return gamma * std::pow(tau, tau) * std::pow(tau + 2.0, 4.0 * (tau + 2.0));
}

inline DiophantineReport verify_diophantine(const Frequency& f, int qmax) {
    if (qmax < 1) throw std::invalid_argument("verify_diophantine: qmax must be >= 1");
    DiophantineReport rep;
    rep.qmax = qmax;
    rep.min_product = std::numeric_limits<double>::infinity();
    IntVec q(f.dim, 0);
    detail::for_each_q(f.dim, qmax, q, 0, [&](const IntVec& qq) {
        int n = detail::sup_norm(qq);
        if (n == 0) return;
        double prod = std::abs(f.dot(qq)) * std::pow(double(n), f.tau);
        if (prod < rep.min_product) {
            rep.min_product = prod;
            rep.worst_q = qq;
        }
    });
    rep.resonance_found = rep.min_product == 0.0;
    rep.implied_gamma =
        rep.resonance_found ? std::numeric_limits<double>::infinity() : 1.0 / rep.min_product;
    rep.declared_gamma_ok = f.gamma >= rep.implied_gamma;
    rep.smallness_value = smallness_constant(f.gamma, f.tau);
    rep.smallness_ok = rep.smallness_value < 0.5;
    return rep;
}

/// omega = (1, golden ratio), the standard badly-approximable pair.
/// gamma is set to the implied minimal value over |q| <= 50 at tau = 3.
inline Frequency make_golden_frequency() {
    Frequency f;
    f.dim = 2;
    f.omega = {1.0, (1.0 + std::sqrt(5.0)) / 2.0};
    f.tau = 3.0;
    f.gamma = 1.0;  // placeholder for the scan below
    f.gamma = verify_diophantine(f, 50).implied_gamma;
    return f;
}

/// 1/(i <q,omega>), the homological-equation divisor.
inline Complex small_divisor(const Frequency& f, const IntVec& q) {
    bool zero = true;
    for (int v : q)
        if (v != 0) zero = false;
    if (zero) throw std::invalid_argument("homological division undefined at q=0");
    double d = f.dot(q);
    if (std::abs(d) < f.resonance_floor) throw ResonanceError(q, std::abs(d));
    return Complex(0.0, -1.0 / d);  // 1/(i d) = -i/d
}

}  // namespace qnf
