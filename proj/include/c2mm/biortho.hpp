// Biorthogonal polynomial layer: bimoment Gram data for the two-coordinate
// weight, the LDU-style factorization that produces the monic families
// {P_j}, {Q_k} with norms kappa_k, polynomial zeros, and the two multiple-
// orthogonality residual checks.
//
// Bimoment matrices are Hankel-like and lose digits rapidly with degree, so
// everything from moments through the factorization runs in the caller's
// working precision R and in log-scaled form; a conditioning estimate is
// computed from the pivot decay and construction refuses to continue once
// the estimated condition number eats the available digits.
#ifndef C2MM_BIORTHO_HPP
#define C2MM_BIORTHO_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "log_scaled.hpp"
#include "model.hpp"
#include "quadrature.hpp"
#include "scalar.hpp"

namespace c2mm {

namespace detail {

// sup_y (2 tau sqrt(x y) - W(y)) and its argmax: the y-integral's saddle
// height, which controls how reduced moments grow in x.  Octave scan plus
// local refinement; double precision is plenty for envelope work.
inline std::pair<double, double> weight_saddle(const ModelSpec& s, double x) {
    auto phi = [&](double y) { return 2.0 * s.tau * std::sqrt(x * y) - s.W(y); };
    double by = 1.0, best = phi(1.0);
    for (int k = -60; k <= 90; ++k) {
        double y = std::ldexp(1.0, k);
        double v = phi(y);
        if (v > best) { best = v; by = y; }
    }
    double step = 2.0;
    for (int pass = 0; pass < 6; ++pass) {
        step = std::sqrt(step);
        for (int moves = 0; moves < 8; ++moves) {
            double y1 = by / step, y2 = by * step;
            double v1 = phi(y1), v2 = phi(y2);
            if (v1 > best && v1 >= v2) { by = y1; best = v1; }
            else if (v2 > best) { by = y2; best = v2; }
            else break;
        }
    }
    return {best, by};
}

// Log envelope of the x-integrands x^{xpower} e^{-nV(x)} times the reduced
// moment factor, which grows like e^{n*saddle} times up to lmax_env powers
// of the saddle location.  Captures the spec by value so the function stays
// valid however long the caller keeps it.
inline std::function<double(double)> x_envelope(const ModelSpec& s, double xpower,
                                                int lmax_env) {
    return [s, xpower, lmax_env, nd = double(s.n)](double x) {
        if (x <= 0.0) return -std::numeric_limits<double>::infinity();
        auto [smax, ystar] = weight_saddle(s, x);
        double g = xpower * std::log(x) - nd * s.V(x) + nd * smax;
        if (lmax_env > 0 && ystar > 1.0) g += double(lmax_env) * std::log(ystar);
        return g;
    };
}

// Quadrature rule in x matching that envelope.
inline QuadratureRule outer_rule(const ModelSpec& s, double xpower, int lmax_env,
                                 double rel_tol, double extra_drop) {
    DecayHint hint;
    hint.log_env = x_envelope(s, xpower, lmax_env);
    hint.singular_exponent = s.nu;
    return build_quadrature(0.0, std::numeric_limits<double>::infinity(),
                            rel_tol, hint, extra_drop);
}

template <class R>
constexpr double default_weight_tol() {
    return scalar_info<R>::digits10 >= 30 ? 1e-16 : 1e-12;
}
template <class R>
double drop_for(double tol) {
    return (scalar_info<R>::digits10 >= 30 && tol < 1e-13) ? 40.0 : 10.0;
}

} // namespace detail

// Gram data M_{jk} = int int x^j y^k w(x,y) dx dy, computed through the
// factorized form int x^j e^{-nV(x)} h_k(x) dx: one outer quadrature whose
// nodes share a single reduced-moment row each.
template <class R = double>
struct BimomentMatrix {
    ModelSpec spec;
    int d = 0;
    std::vector<LogScaled<R>> m; // row-major

    const LogScaled<R>& at(int j, int k) const {
        if (j < 0 || j >= d || k < 0 || k >= d)
            throw std::out_of_range("bimoment index outside degree");
        return m[size_t(j) * size_t(d) + size_t(k)];
    }
};

struct BimomentOptions {
    double rel_tol = 0.0; // 0: precision default
    int refine = 1;       // outer-rule refinement, for self-convergence checks
};

template <class R = double>
BimomentMatrix<R> build_bimoments(const ModelSpec& s, int d, BimomentOptions opt = {}) {
    const int cap = std::is_same_v<R, DDouble> ? 48 : 24;
    if (d < 1 || d > cap)
        throw std::domain_error("bimoment degree outside supported range for this precision");
    const double tol = opt.rel_tol > 0.0 ? opt.rel_tol : detail::default_weight_tol<R>();

    WeightTable<R> wt(s, d - 1, 0, tol);
    QuadratureRule rule = detail::outer_rule(s, s.nu + double(d - 1), d - 1, tol,
                                             detail::drop_for<R>(tol));
    if (opt.refine > 1) rule = rule.refined(opt.refine);

    BimomentMatrix<R> M;
    M.spec = s;
    M.d = d;
    M.m.assign(size_t(d) * size_t(d), LogScaled<R>{});

    const size_t ord = size_t(rule.order);
    std::vector<R> xs(ord), wq(ord);
    std::vector<std::shared_ptr<const typename WeightTable<R>::Row>> rows(ord);
    std::vector<LogScaled<R>> B(ord);
    std::vector<R> acc(static_cast<size_t>(d));
    for (size_t p0 = 0; p0 < rule.size(); p0 += ord) {
        size_t np = std::min(rule.size() - p0, ord);
        for (size_t i = 0; i < np; ++i) {
            xs[i] = detail::dd_cast<R>(rule.nodes[p0 + i]);
            wq[i] = detail::dd_cast<R>(rule.weights[p0 + i]);
            rows[i] = wt.row(xs[i]);
        }
        for (int k = 0; k < d; ++k) {
            double smax = 0.0;
            bool any = false;
            for (size_t i = 0; i < np; ++i) {
                B[i] = rows[i]->at(k, 0) *
                       ls_exp<R>(-double(s.n) * s.V(xs[i]));
                if (B[i].zero()) continue;
                double sc = to_double(B[i].scale);
                if (!any || sc > smax) smax = sc;
                any = true;
            }
            if (!any) continue;
            for (int j = 0; j < d; ++j) acc[size_t(j)] = R(0.0);
            for (size_t i = 0; i < np; ++i) {
                if (B[i].zero()) continue;
                R t = B[i].mant * detail::exp_any(B[i].scale - R(smax)) * wq[i];
                for (int j = 0; j < d; ++j) {
                    acc[size_t(j)] += t;
                    t = t * xs[i];
                }
            }
            for (int j = 0; j < d; ++j)
                M.m[size_t(j) * size_t(d) + size_t(k)] +=
                    LogScaled<R>(acc[size_t(j)], R(smax));
        }
    }

    for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
            const auto& e = M.at(j, k);
            if (e.zero() || to_double(e.mant) <= 0.0)
                throw std::runtime_error("bimoment entry not positive: quadrature failed");
        }
    return M;
}

// Monic biorthogonal pair and norms.  Coefficients are stored against the
// rescaled variables t = x/sx, u = y/sy (sx, sy exact powers of two chosen
// near the first moment ratios) where they stay O(1); accessors fold the
// scales back in.
template <class R = double>
struct BiorthSystem {
    ModelSpec spec;
    int d = 0;
    double sx = 1.0, sy = 1.0;
    std::vector<LogScaled<R>> pc, qc; // [j*d + m], scaled-variable, monic
    std::vector<LogScaled<R>> kappa;
    double cond_log10 = 0.0;

    const LogScaled<R>& pc_at(int j, int m) const { return pc[idx(j, m)]; }
    const LogScaled<R>& qc_at(int k, int m) const { return qc[idx(k, m)]; }

    // coefficient of x^m in the monic P_j
    LogScaled<R> coeff_p(int j, int m) const {
        return pc[idx(j, m)] * ls_pow(R(sx), R(double(j - m)));
    }
    LogScaled<R> coeff_q(int k, int m) const {
        return qc[idx(k, m)] * ls_pow(R(sy), R(double(k - m)));
    }

    LogScaled<R> eval_p(int j, R x) const { return eval(pc, j, x, sx); }
    LogScaled<R> eval_q(int k, R y) const { return eval(qc, k, y, sy); }

  private:
    size_t idx(int j, int m) const {
        if (j < 0 || j >= d || m < 0 || m > j)
            throw std::out_of_range("biorth coefficient index");
        return size_t(j) * size_t(d) + size_t(m);
    }
    LogScaled<R> eval(const std::vector<LogScaled<R>>& c, int j, R x, double s) const {
        if (j < 0 || j >= d) throw std::out_of_range("biorth polynomial degree");
        R t = x / R(s);
        LogScaled<R> acc{};
        for (int m = j; m >= 0; --m)
            acc = acc * LogScaled<R>(t) + c[size_t(j) * size_t(d) + size_t(m)];
        return acc * ls_pow(R(s), R(double(j)));
    }
};

// Doolittle LDU of the rescaled bimoment matrix; no pivoting, since every
// leading principal minor is nonzero for admissible specs.  P rows come from
// L^{-1}, Q rows from U^{-T}, kappa from the pivots.
template <class R>
BiorthSystem<R> biorthogonalize(const BimomentMatrix<R>& M) {
    const int d = M.d;
    if (d < 1) throw std::domain_error("biorthogonalize: empty bimoment matrix");

    BiorthSystem<R> sys;
    sys.spec = M.spec;
    sys.d = d;

    const LogScaled<R>& m00 = M.at(0, 0);
    auto pick_scale = [&](const LogScaled<R>& m1) {
        double l2 = (m1.log_abs() - m00.log_abs()) / 0.6931471805599453;
        double e = std::nearbyint(l2);
        if (!std::isfinite(e)) e = 0.0;
        e = std::clamp(e, -900.0, 900.0);
        return std::ldexp(1.0, int(e));
    };
    sys.sx = d > 1 ? pick_scale(M.at(1, 0)) : 1.0;
    sys.sy = d > 1 ? pick_scale(M.at(0, 1)) : 1.0;
    R lsx = detail::log_any(R(sys.sx)), lsy = detail::log_any(R(sys.sy));

    // A_{jk} = M_{jk} / (M00 sx^j sy^k): O(1)-ish entries
    std::vector<LogScaled<R>> A(size_t(d) * size_t(d));
    double max_la = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < d; ++j)
        for (int k = 0; k < d; ++k) {
            auto v = M.at(j, k) / m00 *
                     ls_exp<R>(-(R(double(j)) * lsx + R(double(k)) * lsy));
            A[size_t(j) * size_t(d) + size_t(k)] = v;
            max_la = std::max(max_la, v.log_abs());
        }

    auto at = [&](std::vector<LogScaled<R>>& v, int j, int k) -> LogScaled<R>& {
        return v[size_t(j) * size_t(d) + size_t(k)];
    };

    std::vector<LogScaled<R>> L(size_t(d) * size_t(d)), U(size_t(d) * size_t(d));
    std::vector<LogScaled<R>> D(static_cast<size_t>(d));
    double min_ld = std::numeric_limits<double>::infinity();
    for (int k = 0; k < d; ++k) {
        LogScaled<R> piv = at(A, k, k);
        for (int m = 0; m < k; ++m) piv = piv - at(L, k, m) * D[size_t(m)] * at(U, m, k);
        if (piv.zero())
            throw std::runtime_error("biorthogonalize: singular leading minor at degree " +
                                     std::to_string(k));
        D[size_t(k)] = piv;
        min_ld = std::min(min_ld, piv.log_abs());
        at(L, k, k) = LogScaled<R>(R(1.0));
        at(U, k, k) = LogScaled<R>(R(1.0));
        for (int i = k + 1; i < d; ++i) {
            LogScaled<R> li = at(A, i, k), uk = at(A, k, i);
            for (int m = 0; m < k; ++m) {
                li = li - at(L, i, m) * D[size_t(m)] * at(U, m, k);
                uk = uk - at(L, k, m) * D[size_t(m)] * at(U, m, i);
            }
            at(L, i, k) = li / piv;
            at(U, k, i) = uk / piv;
        }
    }

    sys.cond_log10 = (max_la - min_ld) / 2.302585092994046;
    const int digits = scalar_info<R>::digits10;
    if (sys.cond_log10 > double(digits - 4))
        throw std::runtime_error(
            "bimoment conditioning alarm: estimated 1e" +
            std::to_string(int(sys.cond_log10)) + " exceeds 1e" +
            std::to_string(digits - 4) + "; lower the degree or use extended precision");

    // unit-triangular inverses give the monic coefficient rows
    sys.pc.assign(size_t(d) * size_t(d), LogScaled<R>{});
    sys.qc.assign(size_t(d) * size_t(d), LogScaled<R>{});
    for (int j = 0; j < d; ++j) {
        at(sys.pc, j, j) = LogScaled<R>(R(1.0));
        for (int m = j - 1; m >= 0; --m) {
            LogScaled<R> acc{};
            for (int i = m; i < j; ++i) acc = acc + at(L, j, i) * at(sys.pc, i, m);
            at(sys.pc, j, m) = -acc;
        }
    }
    for (int k = 0; k < d; ++k) {
        at(sys.qc, k, k) = LogScaled<R>(R(1.0));
        for (int m = k - 1; m >= 0; --m) {
            LogScaled<R> acc{};
            for (int i = m + 1; i <= k; ++i) acc = acc + at(U, m, i) * at(sys.qc, k, i);
            at(sys.qc, k, m) = -acc;
        }
    }

    sys.kappa.resize(size_t(d));
    for (int k = 0; k < d; ++k)
        sys.kappa[size_t(k)] =
            D[size_t(k)] * m00 * ls_exp<R>(R(double(k)) * (lsx + lsy));
    return sys;
}

// Zeros of P_j from the companion matrix of its scaled-variable coefficients
// (decoded to double, so meant for modest j).
template <class R>
std::vector<std::complex<double>> zeros_p(const BiorthSystem<R>& sys, int j) {
    if (j < 1 || j >= sys.d) throw std::out_of_range("zeros_p: degree outside system");
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(j, j);
    for (int m = 0; m < j; ++m) {
        C(m, j - 1) = -to_double(sys.pc_at(j, m).decode()); // scaled coeffs are O(1)
        if (m > 0) C(m, m - 1) = 1.0;
    }
    Eigen::EigenSolver<Eigen::MatrixXd> es(C);
    std::vector<std::complex<double>> out(static_cast<size_t>(j));
    for (int i = 0; i < j; ++i)
        out[size_t(i)] = es.eigenvalues()(i) * sys.sx;
    std::sort(out.begin(), out.end(),
              [](auto a, auto b) { return a.real() < b.real(); });
    return out;
}

// Multiple-orthogonality residuals.  variant 1 checks int P_j x^k e^{-nV} h_l
// = 0, variant 2 the same against the alternative weights; the admissible
// index set is l = 0..2r, k = 0..floor((j-l-1)/(2r+1)) (empty when negative).
struct MopReport {
    double max_rel = 0.0;
    int checked = 0;
    int worst_j = -1, worst_l = -1, worst_k = -1;
};

template <class R>
MopReport check_mop(const BiorthSystem<R>& sys, int variant, double rel_tol = 0.0) {
    if (variant != 1 && variant != 2) throw std::domain_error("check_mop: variant is 1 or 2");
    const ModelSpec& s = sys.spec;
    const int rr = s.r, d = sys.d, period = 2 * rr + 1;
    const double tol = rel_tol > 0.0 ? rel_tol : detail::default_weight_tol<R>();

    auto kcount = [&](int j, int l) { return std::max(0, (j - l - 1) / period + ((j - l - 1) >= 0 ? 1 : 0)); };
    int kmax_all = 0;
    for (int j = 0; j < d; ++j)
        for (int l = 0; l <= 2 * rr; ++l) kmax_all = std::max(kmax_all, kcount(j, l));
    MopReport rep;
    if (kmax_all == 0) return rep;

    WeightTable<R> wt(s, variant == 1 ? 2 * rr : rr, variant == 1 ? 0 : 1, tol);
    QuadratureRule rule = detail::outer_rule(s, s.nu + double(d - 1 + kmax_all - 1), 2 * rr,
                                             tol, detail::drop_for<R>(tol));

    const int nl = 2 * rr + 1;
    std::vector<LogScaled<R>> I(size_t(d) * size_t(nl) * size_t(kmax_all));
    std::vector<LogScaled<R>> S(I.size());
    auto slot = [&](int j, int l, int k) -> size_t {
        return (size_t(j) * size_t(nl) + size_t(l)) * size_t(kmax_all) + size_t(k);
    };

    const size_t ord = size_t(rule.order);
    std::vector<R> xs(ord), wq(ord);
    std::vector<std::shared_ptr<const typename WeightTable<R>::Row>> rows(ord);
    std::vector<LogScaled<R>> WL(size_t(nl) * ord), Pv(ord), B(ord);
    std::vector<R> acc(static_cast<size_t>(kmax_all)), sacc(static_cast<size_t>(kmax_all));
    using std::fabs; // keep double arguments away from the DDouble overload
    for (size_t p0 = 0; p0 < rule.size(); p0 += ord) {
        size_t np = std::min(rule.size() - p0, ord);
        for (size_t i = 0; i < np; ++i) {
            xs[i] = detail::dd_cast<R>(rule.nodes[p0 + i]);
            wq[i] = detail::dd_cast<R>(rule.weights[p0 + i]);
            rows[i] = wt.row(xs[i]);
            auto ev = ls_exp<R>(-double(s.n) * s.V(xs[i]));
            for (int l = 0; l <= 2 * rr; ++l) {
                auto& w = WL[size_t(l) * ord + i];
                if (variant == 1 || l <= rr) w = rows[i]->at(l, 0) * ev;
                else w = rows[i]->at(l - rr - 1, 1) * ev * xs[i];
            }
        }
        for (int j = 1; j < d; ++j) {
            for (size_t i = 0; i < np; ++i) Pv[i] = sys.eval_p(j, xs[i]);
            for (int l = 0; l <= 2 * rr; ++l) {
                int kc = kcount(j, l);
                if (kc == 0) continue;
                double smax = 0.0;
                bool any = false;
                for (size_t i = 0; i < np; ++i) {
                    B[i] = Pv[i] * WL[size_t(l) * ord + i];
                    if (B[i].zero()) continue;
                    double sc = to_double(B[i].scale);
                    if (!any || sc > smax) smax = sc;
                    any = true;
                }
                if (!any) continue;
                for (int k = 0; k < kc; ++k) acc[size_t(k)] = sacc[size_t(k)] = R(0.0);
                for (size_t i = 0; i < np; ++i) {
                    if (B[i].zero()) continue;
                    R t = B[i].mant * detail::exp_any(B[i].scale - R(smax)) * wq[i];
                    for (int k = 0; k < kc; ++k) {
                        acc[size_t(k)] += t;
                        sacc[size_t(k)] += fabs(t);
                        t = t * xs[i];
                    }
                }
                for (int k = 0; k < kc; ++k) {
                    I[slot(j, l, k)] += LogScaled<R>(acc[size_t(k)], R(smax));
                    S[slot(j, l, k)] += LogScaled<R>(sacc[size_t(k)], R(smax));
                }
            }
        }
    }

    for (int j = 1; j < d; ++j)
        for (int l = 0; l <= 2 * rr; ++l)
            for (int k = 0; k < kcount(j, l); ++k) {
                ++rep.checked;
                double rel = std::exp(I[slot(j, l, k)].log_abs() - S[slot(j, l, k)].log_abs());
                if (rel > rep.max_rel) {
                    rep.max_rel = rel;
                    rep.worst_j = j;
                    rep.worst_l = l;
                    rep.worst_k = k;
                }
            }
    return rep;
}

} // namespace c2mm

#endif // C2MM_BIORTHO_HPP
