#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <stdexcept>

#include <c2mm/biortho.hpp>

using namespace c2mm;

namespace {

double rel(double got, double want) {
    return std::fabs(got - want) / std::fabs(want);
}

const ModelSpec quad_spec(0.3, 0.7, 2, Poly{0.0, 1.0}, Poly{0.0, 0.25, 0.5});

// shared across cases to keep the suite fast
const BimomentMatrix<double>& quad_m6() {
    static const BimomentMatrix<double> m = build_bimoments<double>(quad_spec, 6);
    return m;
}
const BimomentMatrix<double>& quad_m6_refined() {
    static const BimomentMatrix<double> m =
        build_bimoments<double>(quad_spec, 6, {1e-14, 2});
    return m;
}
const BiorthSystem<double>& quad_sys6() {
    static const BiorthSystem<double> s = biorthogonalize(quad_m6());
    return s;
}

} // namespace

TEST_CASE("bimoments factorize into gamma moments when the coupling vanishes") {
    // tau -> 0, nu = 0: w(x,y) -> e^{-nx} e^{-ny}, so M_jk = j! k! / n^{j+k+2}
    ModelSpec ds(0.0, 1e-8, 3, Poly{0.0, 1.0}, Poly{0.0, 1.0});
    auto M = build_bimoments<double>(ds, 5);
    for (int j = 0; j < 5; ++j)
        for (int k = 0; k < 5; ++k) {
            double ref = std::tgamma(j + 1.0) * std::tgamma(k + 1.0) /
                         std::pow(3.0, j + k + 2);
            CHECK(rel(to_double(M.at(j, k).decode()), ref) < 1e-12);
        }
    CHECK_THROWS_AS(M.at(5, 0), std::out_of_range);
    CHECK_THROWS_AS(build_bimoments<double>(ds, 0), std::domain_error);
    CHECK_THROWS_AS(build_bimoments<double>(ds, 25), std::domain_error);
}

TEST_CASE("equal potentials give a symmetric gram matrix and equal families") {
    ModelSpec ss(0.3, 0.7, 2, Poly{0.0, 0.25, 0.5}, Poly{0.0, 0.25, 0.5});
    auto M = build_bimoments<double>(ss, 6);
    for (int j = 0; j < 6; ++j)
        for (int k = 0; k < j; ++k)
            CHECK(rel_diff(M.at(j, k), M.at(k, j)) < 1e-9);
    auto sys = biorthogonalize(M);
    CHECK(sys.sx == sys.sy);
    for (int j = 1; j < 6; ++j)
        for (int m = 0; m < j; ++m)
            CHECK(rel_diff(sys.coeff_p(j, m), sys.coeff_q(j, m)) < 1e-8);
}

TEST_CASE("bimoments converge under rule refinement") {
    const auto& M1 = quad_m6();
    const auto& M2 = quad_m6_refined();
    for (int j = 0; j < 6; ++j)
        for (int k = 0; k < 6; ++k)
            CHECK(rel_diff(M1.at(j, k), M2.at(j, k)) < 1e-10);
}

TEST_CASE("factorization is biorthogonal against independently refined moments") {
    const auto& sys = quad_sys6();
    const auto& Mref = quad_m6_refined();

    double kmax_log = -1e300;
    for (const auto& k : sys.kappa) kmax_log = std::max(kmax_log, k.log_abs());
    for (int j = 0; j < 6; ++j)
        for (int k = 0; k < 6; ++k) {
            LogScaled<double> r{};
            for (int m = 0; m <= j; ++m)
                for (int mp = 0; mp <= k; ++mp)
                    r += sys.coeff_p(j, m) * Mref.at(m, mp) * sys.coeff_q(k, mp);
            if (j == k) CHECK(rel_diff(r, sys.kappa[size_t(j)]) < 1e-7);
            else CHECK(std::exp(r.log_abs() - kmax_log) < 1e-8);
        }

    // kappa_0 is the total weight mass itself, and P_0 = Q_0 = 1
    CHECK(rel_diff(sys.kappa[0], quad_m6().at(0, 0)) < 1e-15);
    CHECK(sys.pc_at(0, 0).decode() == 1.0);
    CHECK(to_double(sys.eval_p(0, 2.3).decode()) == 1.0);
    CHECK(to_double(sys.eval_q(0, 0.4).decode()) == 1.0);

    // evaluation agrees with explicitly unfolded coefficients
    double x = 1.7, horner = 0.0;
    for (int m = 3; m >= 0; --m) horner = horner * x + sys.coeff_p(3, m).decode();
    CHECK(rel(sys.eval_p(3, x).decode(), horner) < 1e-12);
}

TEST_CASE("linear potentials reproduce scaled laguerre families") {
    // V = c1 x, W = c2 y: P_j is monic Laguerre with parameter nu at scale
    // 1/(n(c1 - tau^2/c2)), and Q_k likewise with the roles swapped.
    const double nu = 0.5, tau = 0.6, c1 = 1.0, c2 = 0.8;
    const int n = 4, d = 7;
    ModelSpec ls(nu, tau, n, Poly{0.0, c1}, Poly{0.0, c2});
    auto sys = biorthogonalize(build_bimoments<double>(ls, d));
    CHECK(sys.cond_log10 < 9.0);

    const double sp = 1.0 / (n * (c1 - tau * tau / c2));
    const double sq = 1.0 / (n * (c2 - tau * tau / c1));
    for (int j = 1; j < d; ++j)
        for (int m = 0; m < j; ++m) {
            double lr = std::lgamma(j + 1.0) - std::lgamma(m + 1.0) +
                        std::lgamma(j + nu + 1.0) - std::lgamma(m + nu + 1.0) -
                        std::lgamma(j - m + 1.0);
            double sgn = ((j - m) % 2 == 0) ? 1.0 : -1.0;
            CHECK(rel(sys.coeff_p(j, m).decode(),
                      sgn * std::exp(lr) * std::pow(sp, j - m)) < 1e-7);
            CHECK(rel(sys.coeff_q(j, m).decode(),
                      sgn * std::exp(lr) * std::pow(sq, j - m)) < 1e-7);
        }
}

TEST_CASE("zeros are real, simple, and positive") {
    ModelSpec zs(0.5, 0.8, 6, Poly{0.0, 1.0}, Poly{0.0, -1.0, 0.5});
    auto sys = biorthogonalize(build_bimoments<double>(zs, 6));
    auto z = zeros_p(sys, 5);
    REQUIRE(z.size() == 5);
    double prev = 0.0;
    for (const auto& zi : z) {
        CHECK(std::fabs(zi.imag()) < 1e-8 * (1.0 + std::fabs(zi.real())));
        CHECK(zi.real() > prev + 1e-3);
        prev = zi.real();
        // each root actually kills the polynomial
        double at_root = std::exp(sys.eval_p(5, zi.real()).log_abs());
        double nearby = std::exp(sys.eval_p(5, zi.real() * 1.01).log_abs());
        CHECK(at_root < 1e-6 * nearby);
    }
    CHECK_THROWS_AS(zeros_p(sys, 0), std::out_of_range);
    CHECK_THROWS_AS(zeros_p(sys, 6), std::out_of_range);
}

TEST_CASE("multiple orthogonality holds through both weight routes") {
    const auto& sys = quad_sys6();
    auto r1 = check_mop(sys, 1);
    auto r2 = check_mop(sys, 2);
    // degree-j polynomial carries j conditions: sum = d(d-1)/2
    CHECK(r1.checked == 15);
    CHECK(r2.checked == 15);
    CHECK(r1.max_rel < 1e-8);
    CHECK(r2.max_rel < 1e-8);
    CHECK((r1.worst_j >= 1 && r1.worst_j <= 5));
    CHECK((r1.worst_l >= 0 && r1.worst_l <= 2));
    CHECK((r1.worst_k >= 0 && r1.worst_k <= 1));
    CHECK_THROWS_AS(check_mop(sys, 3), std::domain_error);
}

TEST_CASE("conditioning alarm trips in double and clears in double-double") {
    CHECK_NOTHROW(biorthogonalize(build_bimoments<double>(quad_spec, 8)));
    CHECK_THROWS_WITH(biorthogonalize(build_bimoments<double>(quad_spec, 12)),
                      Catch::Matchers::ContainsSubstring("conditioning"));

    auto wide = biorthogonalize(build_bimoments<DDouble>(quad_spec, 12, {1e-10, 1}));
    CHECK(wide.cond_log10 < 23.0);

    // pivots depend only on leading minors, so the two precisions must agree
    // wherever double still has headroom
    const auto& sys = quad_sys6();
    for (int k = 0; k < 6; ++k)
        CHECK(rel(to_double(wide.kappa[size_t(k)].decode()),
                  sys.kappa[size_t(k)].decode()) < 1e-6);
}
