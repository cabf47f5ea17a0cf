#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "qnf/frequency.hpp"

using namespace qnf;

TEST_CASE("golden frequency constants") {
    Frequency f = make_golden_frequency();
    CHECK(f.dim == 2);
    CHECK(f.omega[0] == 1.0);
    CHECK(f.omega[1] == doctest::Approx(1.6180339887498949).epsilon(1e-15));
    CHECK(f.tau == 3.0);
    // |<omega,(1,-1)>| = phi - 1 = 1/phi
    CHECK(std::abs(f.dot({-1, 1})) == doctest::Approx(0.6180339887498949).epsilon(1e-14));
    // gamma was set from the |q| <= 50 scan and must certify itself
    CHECK(verify_diophantine(f, 50).declared_gamma_ok);
}

TEST_CASE("diophantine scan: golden, qmax=1") {
    Frequency f = make_golden_frequency();
    auto rep = verify_diophantine(f, 1);
    CHECK(rep.min_product == doctest::Approx(0.6180339887498949).epsilon(1e-14));
    // worst q is (1,-1) up to the overall sign of the pair
    CHECK(detail::sup_norm(rep.worst_q) == 1);
    CHECK(std::abs(rep.worst_q[0] + rep.worst_q[1]) == 0);
    CHECK_FALSE(rep.resonance_found);
    CHECK(rep.implied_gamma == doctest::Approx(1.0 / rep.min_product));
}

TEST_CASE("diophantine scan monotone in qmax, golden never resonant") {
    Frequency f = make_golden_frequency();
    double prev = std::numeric_limits<double>::infinity();
    for (int qmax : {1, 2, 5, 10, 20}) {
        auto rep = verify_diophantine(f, qmax);
        CHECK(rep.min_product <= prev);
        CHECK(rep.min_product > 0.0);
        prev = rep.min_product;
    }
}

TEST_CASE("resonant frequency flags gamma invalid") {
    Frequency f;
    f.dim = 2;
    f.omega = {1.0, 1.0};
    f.gamma = 1.0;
    f.tau = 3.0;
    auto rep = verify_diophantine(f, 1);
    CHECK(rep.min_product == 0.0);
    CHECK(rep.resonance_found);
    CHECK_FALSE(rep.declared_gamma_ok);
}

TEST_CASE("smallness constant") {
    // tau=3, gamma=0.01: 0.01 * 27 * 5^20
    double expect = 0.01 * 27.0 * std::pow(5.0, 20.0);
    CHECK(smallness_constant(0.01, 3.0) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(2.57492e13).epsilon(1e-4));
    CHECK_FALSE(verify_diophantine(
                    [] {
                        Frequency f = make_golden_frequency();
                        f.gamma = 0.01;
                        return f;
                    }(),
                    1)
                    .smallness_ok);
}

TEST_CASE("small divisor values and round trip") {
    Frequency f = make_golden_frequency();
    CHECK(small_divisor(f, {1, 0}) == Complex(0.0, -1.0));
    Complex d = small_divisor(f, {1, -1});
    CHECK(d.real() == 0.0);
    CHECK(d.imag() == doctest::Approx(1.0 / 0.6180339887498949).epsilon(1e-14));
    // round trip over a scan box
    IntVec q(2, 0);
    double worst = 0.0;
    detail::for_each_q(2, 6, q, 0, [&](const IntVec& qq) {
        if (detail::sup_norm(qq) == 0) return;
        worst = std::max(worst, std::abs(small_divisor(f, qq) * Complex(0.0, f.dot(qq)) - 1.0));
    });
    CHECK(worst <= 1e-14);
}

TEST_CASE("small divisor errors") {
    Frequency f = make_golden_frequency();
    CHECK_THROWS_AS((void)small_divisor(f, {0, 0}), std::invalid_argument);
    Frequency res;
    res.dim = 2;
    res.omega = {1.0, 1.0};
    res.gamma = 1.0;
    res.tau = 3.0;
    CHECK_THROWS_AS((void)small_divisor(res, {1, -1}), ResonanceError);
    CHECK_THROWS_AS((void)verify_diophantine(f, 0), std::invalid_argument);
}
