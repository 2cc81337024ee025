#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>

#include <c2mm/model.hpp>

using namespace c2mm;

namespace {

double rel(double got, double want) {
    return std::fabs(got - want) / std::fabs(want);
}

template <class T>
double ls_rel(const LogScaled<T>& got, double want) {
    return rel(to_double(got.decode()), want);
}

const ModelSpec quad_spec(0.3, 0.7, 2, Poly{0.0, 1.0}, Poly{0.0, 0.25, 0.5});

} // namespace

TEST_CASE("polynomial helper") {
    Poly p{1.0, -2.0, 0.0, 3.0};
    CHECK(p.degree() == 3);
    CHECK(p.lead() == 3.0);
    CHECK(p(2.0) == 1.0 - 4.0 + 24.0);
    CHECK(p(DDouble(2.0)).hi == 21.0);
    auto d = p.derivative();
    CHECK(d.c == std::vector<double>{-2.0, 0.0, 9.0});
    CHECK(Poly{}.degree() == -1);
    CHECK(Poly{4.0}.degree() == 0);
}

TEST_CASE("spec validation and normalization") {
    ModelSpec s(0.5, 0.8, 4, Poly{3.0, 1.0}, Poly{-1.5, 0.25, 0.5});
    CHECK(s.v_offset == 3.0);
    CHECK(s.w_offset == -1.5);
    CHECK(s.V.c[0] == 0.0);
    CHECK(s.W.c[0] == 0.0);
    CHECK(s.r == 1);
    CHECK(s.coupling() == 0.8 * 4);
    CHECK(s.wprime_coeff(1) == 0.25);
    CHECK(s.wprime_coeff(2) == 1.0);
    CHECK(s.raw_log_shift() == -4.0 * (3.0 - 1.5));

    CHECK_THROWS_AS(ModelSpec(-1.0, 0.5, 1, Poly{0, 1}, Poly{0, 1}), std::domain_error);
    CHECK_THROWS_AS(ModelSpec(0.0, -0.5, 1, Poly{0, 1}, Poly{0, 1}), std::domain_error);
    CHECK_THROWS_AS(ModelSpec(0.0, 0.5, 0, Poly{0, 1}, Poly{0, 1}), std::domain_error);
    CHECK_THROWS_AS(ModelSpec(0.0, 0.5, 1, Poly{2.0}, Poly{0, 1}), std::domain_error);
    CHECK_THROWS_AS(ModelSpec(0.0, 0.5, 1, Poly{0, -1.0}, Poly{0, 1}), std::domain_error);
    // linear-linear coupling bound tau^2 < c1 c2
    CHECK_THROWS_AS(ModelSpec(0.0, 1.0, 1, Poly{0, 1}, Poly{0, 1}), std::domain_error);
    CHECK_NOTHROW(ModelSpec(0.0, 0.99, 1, Poly{0, 1}, Poly{0, 1}));
    // quadratic W lifts the bound
    CHECK_NOTHROW(ModelSpec(0.0, 1.4, 1, Poly{0, 1}, Poly{0, 0.1, 0.5}));
    // tau = 0 is storable (sampler controls) but rejected by weight math
    ModelSpec dec(0.0, 0.0, 2, Poly{0, 1}, Poly{0, 1});
    CHECK_THROWS_AS(coupling_factor(dec, 1.0), std::domain_error);
    CHECK_THROWS_AS(WeightTable<double>(dec, 2), std::domain_error);
}

TEST_CASE("json ingestion") {
    auto s = model_from_json_text(
        R"({"nu": 0.25, "tau": 0.6, "n": 8, "V": [1.0, 0.0, 0.5], "W": [0.0, 0.1, 0.25]})");
    CHECK(s.nu == 0.25);
    CHECK(s.tau == 0.6);
    CHECK(s.n == 8);
    CHECK(s.v_offset == 1.0);
    CHECK(s.V.degree() == 2);
    CHECK(s.W.degree() == 2);
    CHECK(s.r == 1);
    CHECK_THROWS_AS(model_from_json_text(R"({"nu": 0, "tau": 0.5, "V": [0,1], "W": [0,1]})"),
                    std::invalid_argument);
    CHECK_THROWS(model_from_json_text("not json"));
}

TEST_CASE("coupling factor values") {
    ModelSpec s0(0.0, 1.0, 1, Poly{0, 1, 1}, Poly{0, 0, 0.5});
    CHECK(to_double(coupling_factor(s0, 0.0).decode()) == 1.0);

    ModelSpec spos(0.7, 1.0, 1, Poly{0, 1, 1}, Poly{0, 0, 0.5});
    CHECK(coupling_factor(spos, 0.0).zero());

    ModelSpec sneg(-0.5, 1.0, 1, Poly{0, 1, 1}, Poly{0, 0, 0.5});
    CHECK_THROWS_AS(coupling_factor(sneg, 0.0), std::domain_error);

    // nu = 1/2, tau = 1, n = 2, x = 1: closed form sinh(4)/sqrt(2 pi)
    ModelSpec sh(0.5, 1.0, 2, Poly{0, 1}, Poly{0, 0, 0.5});
    CHECK(ls_rel(coupling_factor(sh, 1.0), 10.88710179858841955444543) < 1e-13);
    CHECK(ls_rel(coupling_factor(sh, DDouble(1.0)), 10.88710179858841955444543) < 1e-15);

    // complex evaluation agrees with the real axis
    auto zc = coupling_factor(sh, Cplx<double>(1.0, 0.0));
    CHECK(rel(to_double(zc.mant.re), to_double(coupling_factor(sh, 1.0).mant)) < 1e-14);
    CHECK(std::fabs(to_double(zc.mant.im)) < 1e-14);
}

TEST_CASE("coupling factor satisfies its differential equation") {
    // x f'' - (nu - 1) f' - (tau n)^2 f = 0
    const double nus[] = {0.0, 0.37, 1.5, -0.4};
    const double xs[] = {0.3, 1.7, 9.4};
    for (double nu : nus) {
        ModelSpec s(nu, 0.8, 3, Poly{0, 1}, Poly{0, 0, 0.5});
        double tn2 = s.coupling() * s.coupling();
        for (double x : xs) {
            double f = to_double(coupling_factor(s, x).decode());
            double fp = to_double(coupling_factor(s, x, 1).decode());
            double fpp = to_double(coupling_factor(s, x, 2).decode());
            double resid = x * fpp - (nu - 1.0) * fp - tn2 * f;
            CHECK(std::fabs(resid) < 1e-8 * std::fabs(tn2 * f));
        }
    }
}

TEST_CASE("ensemble weight") {
    ModelSpec spos(0.7, 1.0, 1, Poly{0, 1, 1}, Poly{0, 0, 0.5});
    CHECK(ensemble_weight(spos, 0.0, 1.0).zero());

    // Bessel factor depends on the coordinates only through their product
    ModelSpec ssym(0.3, 0.5, 2, Poly{0, 1}, Poly{0, 1});
    auto a = coupling_factor(ssym, 2.0 * 3.0);
    auto b = coupling_factor(ssym, 3.0 * 2.0);
    CHECK(to_double(a.mant) == to_double(b.mant));
    CHECK(to_double(a.scale) == to_double(b.scale));

    // nu=0, tau=0.5, n=1, V=x, W=y at x=y=1: I_0(1) e^{-2}
    ModelSpec sw(0.0, 0.5, 1, Poly{0, 1}, Poly{0, 1});
    CHECK(ls_rel(ensemble_weight(sw, 1.0, 1.0), 0.1713433841617787073665894) < 1e-13);
    CHECK_THROWS_AS(ensemble_weight(sw, -1.0, 1.0), std::domain_error);
}

TEST_CASE("reduced moments: decoupled limit") {
    // tau ~ 0, W = y: h_0(1) -> int e^{-ny} dy = 1/n
    ModelSpec s(0.0, 1e-8, 3, Poly{0, 1}, Poly{0, 1});
    WeightTable<double> t(s, 0, 0);
    CHECK(ls_rel(t.h(0, 1.0), 1.0 / 3.0) < 1e-9);
}

TEST_CASE("reduced moments against direct quadrature") {
    // nu=0.3 tau=0.7 n=2 W=y^2/2+y/4, x=1.3
    WeightTable<double> t(quad_spec, 3, 1);
    const double x = 1.3;
    CHECK(ls_rel(t.h(0, x), 1.941746193592490296061266) < 1e-10);
    CHECK(ls_rel(t.h(1, x), 1.624235868199928819921158) < 1e-10);
    CHECK(ls_rel(t.h(2, x), 1.812392167709517175489552) < 1e-10);
    CHECK(ls_rel(t.h(3, x), 2.412586504589859869222396) < 1e-10);
    CHECK(ls_rel(t.h(0, x, 1), 1.919350827635775676647783) < 1e-10);

    // extended-precision table reproduces the same values far below 1e-16
    WeightTable<DDouble> td(quad_spec, 0, 0);
    auto h0 = td.h(0, DDouble(x));
    DDouble want = DDouble(1.9417461935924902) + DDouble(6.330133759646135e-17);
    DDouble got = h0.decode();
    CHECK(std::fabs(to_double((got - want) / want)) < 1e-24);
}

TEST_CASE("row cache reuses work and keys on the full argument") {
    WeightTable<double> t(quad_spec, 1, 1);
    auto r1 = t.row(1.3);
    auto r2 = t.row(1.3);
    CHECK(r1.get() == r2.get());
    auto r3 = t.row(1.4);
    CHECK(r1.get() != r3.get());

    WeightTable<DDouble> td(quad_spec, 0, 0);
    DDouble xa(1.3);
    DDouble xb = DDouble(1.3) + DDouble(1e-20);
    auto ra = td.row(xa);
    auto rb = td.row(xb); // same key, different value: must not alias
    CHECK(ra.get() != rb.get());
    CHECK(to_double(ra->at(0, 0).decode()) != 0.0);
}

TEST_CASE("derivative recurrence for quadratic W") {
    // x h0' = -h0 + n alpha h1 + n h2 for W = y^2/2 + alpha y
    const double alpha = 0.25, n = 2.0;
    WeightTable<double> t(quad_spec, 2, 1);
    for (double x : {0.4, 1.3, 3.7, 8.0}) {
        double h0 = to_double(t.h(0, x).decode());
        double h0p = to_double(t.h(0, x, 1).decode());
        double h1 = to_double(t.h(1, x).decode());
        double h2 = to_double(t.h(2, x).decode());
        double resid = x * h0p + h0 - n * (alpha * h1 + h2);
        double scale = std::fabs(x * h0p) + std::fabs(h0) + n * (alpha * std::fabs(h1) + std::fabs(h2));
        CHECK(std::fabs(resid) < 1e-8 * scale);
    }
}

TEST_CASE("derivative recurrence for general polynomial W") {
    // x h_l' + (l+1) h_l - n sum_j c_j h_{l+j} = 0, cubic W (r = 2)
    ModelSpec s(0.45, 0.6, 3, Poly{0, 1}, Poly{0, 0.3, 0.1, 0.2});
    const int rr = s.r;
    REQUIRE(rr == 2);
    WeightTable<double> t(s, 5, 1);
    for (int l = 0; l <= 2; ++l) {
        for (double x : {0.7, 2.1}) {
            double lhs = x * to_double(t.h(l, x, 1).decode()) +
                         double(l + 1) * to_double(t.h(l, x).decode());
            double rhs = 0.0, scale = std::fabs(lhs);
            for (int j = 1; j <= rr + 1; ++j) {
                double term = double(s.n) * s.wprime_coeff(j) * to_double(t.h(l + j, x).decode());
                rhs += term;
                scale += std::fabs(term);
            }
            CHECK(std::fabs(lhs - rhs) < 1e-8 * scale);
        }
    }
}

TEST_CASE("moment ladder ties consecutive l through derivatives") {
    // (tau n)^2 h_{l+1} = x h_l'' - (nu - 1) h_l'
    WeightTable<double> t(quad_spec, 3, 2);
    double tn2 = quad_spec.coupling() * quad_spec.coupling();
    for (int l = 0; l <= 2; ++l) {
        for (double x : {0.2, 0.9, 1.3, 2.6, 5.5}) {
            double lhs = tn2 * to_double(t.h(l + 1, x).decode());
            double rhs = x * to_double(t.h(l, x, 2).decode()) -
                         (quad_spec.nu - 1.0) * to_double(t.h(l, x, 1).decode());
            CHECK(std::fabs(lhs - rhs) < 1e-8 * std::fabs(lhs));
        }
    }
}

TEST_CASE("four-term relation for quadratic W") {
    // h3 + 2a h2 + (a^2 - (nu+2)/n) h1 - ((nu+1)a/n + tau^2 x) h0 = 0
    const double a = 0.25, nu = quad_spec.nu, tau = quad_spec.tau;
    const double n = double(quad_spec.n);
    WeightTable<double> t(quad_spec, 3, 0);
    for (double x : {0.3, 1.3, 4.2, 9.0}) {
        double h0 = to_double(t.h(0, x).decode());
        double h1 = to_double(t.h(1, x).decode());
        double h2 = to_double(t.h(2, x).decode());
        double h3 = to_double(t.h(3, x).decode());
        double resid = h3 + 2 * a * h2 + (a * a - (nu + 2) / n) * h1 -
                       ((nu + 1) * a / n + tau * tau * x) * h0;
        double scale = std::fabs(h3) + 2 * a * std::fabs(h2) +
                       std::fabs((a * a - (nu + 2) / n) * h1) +
                       std::fabs(((nu + 1) * a / n + tau * tau * x) * h0);
        CHECK(std::fabs(resid) < 1e-8 * scale);
    }
}

TEST_CASE("reduced moments stay positive") {
    WeightTable<double> t(quad_spec, 3, 0);
    for (double x : {1e-4, 0.1, 1.0, 10.0, 40.0}) {
        for (int l = 0; l <= 3; ++l) {
            auto v = t.h(l, x);
            CHECK(!v.zero());
            CHECK(to_double(v.mant) > 0.0);
        }
    }
}

TEST_CASE("alternative weights") {
    // r = 1 spec: l = 0,1 take e^{-nV} h_l; l = 2 takes e^{-nV} x h_0'
    WeightTable<double> t(quad_spec, 1, 1);
    const double x = 1.3;
    double env = std::exp(-double(quad_spec.n) * quad_spec.V(x));
    CHECK(rel(to_double(t.alt_weight(0, x).decode()),
              env * to_double(t.h(0, x).decode())) < 1e-14);
    CHECK(rel(to_double(t.alt_weight(1, x).decode()),
              env * to_double(t.h(1, x).decode())) < 1e-14);
    CHECK(rel(to_double(t.alt_weight(2, x).decode()),
              env * x * to_double(t.h(0, x, 1).decode())) < 1e-14);
    CHECK_THROWS_AS(t.alt_weight(3, x), std::out_of_range);
    CHECK_THROWS_AS(t.alt_weight(-1, x), std::out_of_range);
}

TEST_CASE("alternative weights vanish like x^nu at the origin") {
    ModelSpec s(0.6, 0.5, 2, Poly{0, 1}, Poly{0, 0.25, 0.5});
    WeightTable<double> t(s, 1, 1);
    for (int l : {0, 1, 2}) {
        double w1 = t.alt_weight(l, 1e-6).log_abs();
        double w2 = t.alt_weight(l, 1e-4).log_abs();
        double slope = (w2 - w1) / (std::log(1e-4) - std::log(1e-6));
        CHECK(std::fabs(slope - s.nu) < 0.02);
    }
}
