#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "qnf/symbol.hpp"

using namespace qnf;

namespace {

Frequency golden() { return make_golden_frequency(); }

Symbol one_generator(IntVec q, int m, double a) {
    PotentialSpec s;
    s.dim = int(q.size());
    s.pstep = 1.0;
    s.generators.push_back({std::move(q), m, a});
    return build_potential(s);
}

}  // namespace

TEST_CASE("build_potential: four symmetrized atoms, F_q = (a/2) cos") {
    Symbol V = one_generator({1, 0}, 1, 1.0);
    CHECK(V.terms.size() == 4);
    CHECK(V.coeff({{1, 0}, 1}) == Complex(0.25));
    CHECK(V.coeff({{1, 0}, -1}) == Complex(0.25));
    CHECK(V.coeff({{-1, 0}, 1}) == Complex(-0.25));
    CHECK(V.coeff({{-1, 0}, -1}) == Complex(-0.25));
    // F_{(1,0)}(t) = (1/2) cos(t), F_{(-1,0)} = -F_{(1,0)}
    for (double t : {0.0, 0.7, 2.3}) {
        CHECK(fourier_coeff_at(V, {1, 0}, t).real() == doctest::Approx(0.5 * std::cos(t)));
        CHECK(fourier_coeff_at(V, {1, 0}, t).imag() == doctest::Approx(0.0));
        CHECK(std::abs(fourier_coeff_at(V, {-1, 0}, t) + fourier_coeff_at(V, {1, 0}, t)) < 1e-16);
    }
}

TEST_CASE("build_potential: empty and q=0 cases") {
    PotentialSpec s;
    s.dim = 2;
    s.pstep = 1.0;
    CHECK(build_potential(s).zero());
    s.generators.push_back({{0, 0}, 1, 1.0});
    CHECK_THROWS_AS((void)build_potential(s), std::invalid_argument);
}

TEST_CASE("add and scale") {
    Symbol V = one_generator({1, 0}, 1, 1.0);
    CHECK(add(V, scale(V, -1.0)).zero());
    CHECK(scale(Symbol{2, 1.0, {}}, Complex(3.0)).zero());
    Symbol G = one_generator({0, 1}, 2, 0.5);
    Symbol u = add(V, G);
    CHECK(u.terms.size() == 8);  // disjoint supports: union
    CHECK(u.coeff({{0, 1}, 2}) == Complex(0.125));
}

TEST_CASE("rho_norm") {
    Symbol z;
    z.dim = 2;
    CHECK(rho_norm(z, 3.0) == 0.0);
    Symbol F;
    F.dim = 2;
    F.pstep = 1.0;
    F.insert({{1, 0}, 1}, Complex(0.5));
    CHECK(rho_norm(F, 3.0) == doctest::Approx(0.5 * std::exp(6.0)).epsilon(1e-14));
    // triangle inequality
    Symbol G = one_generator({1, -1}, 2, 0.3);
    CHECK(rho_norm(add(F, G), 3.0) <= rho_norm(F, 3.0) + rho_norm(G, 3.0) + 1e-12);
}

TEST_CASE("parity classification") {
    Symbol V = one_generator({1, 0}, 1, 1.0);
    CHECK(parity_J(V) == Parity::Odd);
    Symbol E;
    E.dim = 2;
    E.pstep = 1.0;
    E.insert({{0, 0}, 3}, Complex(1.0, 2.0));
    CHECK(parity_J(E) == Parity::Even);
    CHECK(parity_J(add(V, E)) == Parity::None);
}

TEST_CASE("reality criterion and the i-flip") {
    Symbol V = one_generator({1, 0}, 1, 1.0);
    CHECK(is_real_coeffs(V));
    CHECK(reality_residual(V) == 0.0);
    Symbol iV = scale(V, Complex(0.0, 1.0));
    CHECK(is_imag_coeffs(iV));
    CHECK_FALSE(is_real_coeffs(iV));
}

TEST_CASE("PT symmetry at sample points: conj F(xi,-x) = F(xi,x)") {
    Frequency f = golden();
    Symbol V = one_generator({1, 0}, 1, 1.0);
    std::vector<double> xi{0.3, -1.1};
    for (auto x : {std::vector<double>{0.2, 0.9}, {1.4, -0.5}}) {
        std::vector<double> mx{-x[0], -x[1]};
        CHECK(std::abs(std::conj(evaluate(V, xi, mx, f)) - evaluate(V, xi, x, f)) < 1e-15);
    }
}

TEST_CASE("moyal bracket: exact antisymmetry and self/zero cases") {
    Frequency f = golden();
    TruncationPolicy pol;
    Symbol F = one_generator({1, 0}, 1, 1.0);
    Symbol G = one_generator({0, 1}, 2, 0.7);
    Symbol anti = add(moyal_bracket(F, G, 1.0, pol, f).value,
                      moyal_bracket(G, F, 1.0, pol, f).value);
    CHECK(anti.zero());  // exact atom-wise
    CHECK(moyal_bracket(F, F, 1.0, pol, f).value.zero());
    // x-independent pair
    Symbol A, B;
    A.dim = B.dim = 2;
    A.pstep = B.pstep = 1.0;
    A.insert({{0, 0}, 1}, Complex(1.0));
    B.insert({{0, 0}, -2}, Complex(0.3, 0.4));
    CHECK(moyal_bracket(A, B, 1.0, pol, f).value.zero());
    CHECK(poisson_bracket(A, B, pol, f).value.zero());
    CHECK_THROWS_AS((void)moyal_bracket(F, G, 0.0, pol, f), std::invalid_argument);
}

TEST_CASE("poisson bracket: hand convolution of two single atoms") {
    Frequency f = golden();
    TruncationPolicy pol;
    Symbol F, G;
    F.dim = G.dim = 2;
    F.pstep = G.pstep = 1.0;
    F.insert({{1, 0}, 1}, Complex(1.0));
    G.insert({{0, 1}, 1}, Complex(1.0));
    Symbol pb = poisson_bracket(F, G, pol, f).value;
    REQUIRE(pb.terms.size() == 1);
    // amplitude delta * (m_F <omega,q_G> - m_G <omega,q_F>) = omega2 - omega1
    Complex c = pb.coeff({{1, 1}, 2});
    CHECK(c.real() == doctest::Approx(f.omega[1] - f.omega[0]).epsilon(1e-15));
    CHECK(c.imag() == 0.0);
}

TEST_CASE("poisson limit: moyal deviation is O(hbar^2)") {
    Frequency f = golden();
    TruncationPolicy pol;
    Symbol F = one_generator({1, 0}, 1, 1.0);
    Symbol G = one_generator({1, -1}, 2, 0.4);
    Symbol pb = poisson_bracket(F, G, pol, f).value;
    auto dev = [&](double h) {
        return rho_norm(add(moyal_bracket(F, G, h, pol, f).value, scale(pb, -1.0)), pol.rho);
    };
    double ratio = dev(0.2) / dev(0.1);
    CHECK(ratio > 3.5);
    CHECK(ratio < 4.5);
}

TEST_CASE("brackets are bilinear") {
    Frequency f = golden();
    TruncationPolicy pol;
    pol.eta = 0.0;
    pol.eta_relative = false;
    Symbol F = one_generator({1, 0}, 1, 1.0);
    Symbol G = one_generator({0, 1}, 1, 0.5);
    Symbol H = one_generator({1, -1}, 2, 0.25);
    Complex a(0.3, -1.2);
    Symbol lhs = moyal_bracket(add(scale(F, a), G), H, 1.0, pol, f).value;
    Symbol rhs = add(scale(moyal_bracket(F, H, 1.0, pol, f).value, a),
                     moyal_bracket(G, H, 1.0, pol, f).value);
    double worst = 0.0;
    for (const auto& [k, c] : lhs.terms) worst = std::max(worst, std::abs(c - rhs.coeff(k)));
    for (const auto& [k, c] : rhs.terms) worst = std::max(worst, std::abs(c - lhs.coeff(k)));
    CHECK(worst < 1e-15);
}

TEST_CASE("theorem-level bracket properties: imaginary closure, parity product") {
    Frequency f = golden();
    TruncationPolicy pol;
    Symbol F = one_generator({1, 0}, 1, 1.0);   // real coeffs, odd
    Symbol G = one_generator({0, 1}, 2, 0.7);   // real coeffs, odd
    Symbol mb = moyal_bracket(F, G, 1.0, pol, f).value;
    CHECK_FALSE(mb.zero());
    CHECK(is_imag_coeffs(mb));
    CHECK(parity_J(mb) == Parity::Odd);  // J{F,G} = -J_F J_G
}

TEST_CASE("bracket_with_L") {
    Frequency f = golden();
    LSymbol L{f};
    Symbol A;
    A.dim = 2;
    A.pstep = 1.0;
    A.insert({{0, 0}, 5}, Complex(2.0));
    CHECK(bracket_with_L(A, L).zero());
    Symbol F;
    F.dim = 2;
    F.pstep = 1.0;
    F.insert({{1, 0}, 1}, Complex(1.0));
    Symbol bl = bracket_with_L(F, L);
    // atom maps to +i<q,omega> c = +i (orientation fixed by the matrix
    // commutator; see the weyl tests for the oracle consistency check)
    CHECK(bl.coeff({{1, 0}, 1}) == Complex(0.0, 1.0));
}

TEST_CASE("truncate") {
    TruncationPolicy pol;
    pol.eta = 0.0;
    pol.eta_relative = false;
    Symbol F = one_generator({1, 0}, 1, 1.0);
    auto id = truncate(F, pol);
    CHECK(id.value.terms.size() == 4);
    CHECK(id.dropped == 0.0);
    pol.eta = 10.0;
    auto all = truncate(F, pol);
    CHECK(all.value.zero());
    CHECK(all.dropped == doctest::Approx(rho_norm(F, pol.rho)));
    // mixed case: dropped mass equals the rho-norm of the difference
    Symbol G = add(F, one_generator({1, -1}, 3, 1e-6));
    pol.eta = 1e-3;
    auto mix = truncate(G, pol);
    CHECK(mix.dropped == doctest::Approx(rho_norm(add(G, scale(mix.value, -1.0)), pol.rho)));
}

TEST_CASE("serialization round trip") {
    Symbol F = one_generator({1, -1}, 2, 0.8372619);
    F.insert({{0, 3}, -5}, Complex(1.25e-7, -3.5));
    std::stringstream ss;
    write_symbol(ss, F);
    Symbol G = read_symbol(ss);
    CHECK(G.dim == F.dim);
    CHECK(G.pstep == F.pstep);
    REQUIRE(G.terms.size() == F.terms.size());
    for (const auto& [k, c] : F.terms) CHECK(G.coeff(k) == c);
}
