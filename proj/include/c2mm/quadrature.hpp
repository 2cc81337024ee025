// Gauss-Legendre panel quadrature with double-double nodes and log-scaled
// accumulation.  Rules are built from a decay hint: the envelope places the
// truncation point of [0,inf) integrals and concentrates panels where the
// integrand actually lives (the Laplace peaks sharpen like 1/sqrt(n), so
// uniform panels are not an option).  A y = s^2 substitution plus geometric
// end grading tames y^a endpoint singularities with fractional a > -1.
#ifndef C2MM_QUADRATURE_HPP
#define C2MM_QUADRATURE_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <vector>
#include "dd.hpp"
#include "scalar.hpp"
#include "log_scaled.hpp"

namespace c2mm {

namespace detail {

template <class R> R dd_cast(DDouble v) {
    if constexpr (std::is_same_v<R, double>) return v.hi;
    else return R(v); // DDouble itself, or any wider scalar embedding it
}
template <class R> R exp_any(R x) {
    if constexpr (std::is_same_v<R, double>) return std::exp(x);
    else return exp(x);
}

// P_m and P_m' by the three-term recurrence; S is double or DDouble.
template <class S>
void legendre_pair(int m, S x, S& p, S& dp) {
    if (m == 0) { p = S{1.0}; dp = S{0.0}; return; }
    S pm1{1.0}, pk = x;
    for (int k = 1; k < m; ++k) {
        S pnext = (x * pk * double(2 * k + 1) - pm1 * double(k)) / double(k + 1);
        pm1 = pk;
        pk = pnext;
    }
    p = pk;
    dp = (x * pk - pm1) * double(m) / (x * x - S{1.0});
}

struct GLRule {
    std::vector<DDouble> x, w; // ascending on [-1,1]
};

// Nodes seeded in double, polished by Newton in dd.  Cached per order.
inline const GLRule& gl_rule(int m) {
    static std::mutex mu;
    static std::map<int, std::unique_ptr<GLRule>> cache;
    std::lock_guard<std::mutex> lk(mu);
    auto& slot = cache[m];
    if (!slot) {
        auto r = std::make_unique<GLRule>();
        r->x.resize(m);
        r->w.resize(m);
        for (int i = 0; i < (m + 1) / 2; ++i) {
            int j = m - 1 - i; // index of the positive-side root
            double x0 = std::cos(3.141592653589793 * (i + 0.75) / (m + 0.5));
            for (int it = 0; it < 4; ++it) {
                double p, dp;
                legendre_pair(m, x0, p, dp);
                x0 -= p / dp;
            }
            DDouble x{x0};
            if (2 * i + 1 == m) x = DDouble(0.0); // odd m: middle root is exact
            for (int it = 0; it < 3; ++it) {
                DDouble p, dp;
                legendre_pair(m, x, p, dp);
                x = x - p / dp;
            }
            DDouble p, dp;
            legendre_pair(m, x, p, dp);
            DDouble w = DDouble(2.0) / ((DDouble(1.0) - x * x) * dp * dp);
            r->x[j] = x;
            r->w[j] = w;
            r->x[i] = -x;
            r->w[i] = w;
        }
        slot = std::move(r);
    }
    return *slot;
}

} // namespace detail

enum class RuleKind { legendre_panels, doubled };

// What build_quadrature needs to know about the integrand: the log of a
// decreasing tail envelope (for truncation and panel placement) and the
// power-law exponent at the left endpoint (for substitution and grading).
struct DecayHint {
    std::function<double(double)> log_env;
    double singular_exponent = 0.0;
};

struct QuadratureRule {
    std::vector<DDouble> nodes, weights; // in the integration variable, ascending
    std::vector<double> edges;           // panel edges in the transform variable
    int order = 32;
    RuleKind kind = RuleKind::legendre_panels;
    double lo = 0.0, hi = 0.0; // interval covered
    bool truncated = false;    // hi stands in for +inf

    size_t size() const { return nodes.size(); }

    template <class T, class F>
    T integrate(F&& f) const {
        using R = real_of_t<T>;
        T acc = T(0.0);
        for (size_t i = 0; i < nodes.size(); ++i)
            acc += f(detail::dd_cast<R>(nodes[i])) * detail::dd_cast<R>(weights[i]);
        return acc;
    }

    // f returns LogScaled<T>; per-panel sums share the panel's dominant scale
    // so no decode ever leaves the representable range.
    template <class T, class F>
    LogScaled<T> integrate_ls(F&& f) const {
        using R = real_of_t<T>;
        LogScaled<T> total{};
        std::array<LogScaled<T>, 64> vals;
        for (size_t p0 = 0; p0 < nodes.size(); p0 += size_t(order)) {
            size_t np = std::min(nodes.size() - p0, size_t(order));
            double smax = 0.0;
            bool any = false;
            for (size_t i = 0; i < np; ++i) {
                vals[i] = f(detail::dd_cast<R>(nodes[p0 + i]));
                if (vals[i].zero()) continue;
                double s = to_double(vals[i].scale);
                if (!any || s > smax) smax = s;
                any = true;
            }
            if (!any) continue;
            T msum = T(0.0);
            for (size_t i = 0; i < np; ++i) {
                if (vals[i].zero()) continue;
                R gap = vals[i].scale - R(smax);
                msum += vals[i].mant * T(detail::exp_any(gap)) *
                        detail::dd_cast<R>(weights[p0 + i]);
            }
            total += LogScaled<T>(msum, R(smax));
        }
        return total;
    }

    QuadratureRule refined(int factor = 2) const;
};

namespace detail {

inline QuadratureRule rule_from_edges(const std::vector<double>& edges, int order,
                                      RuleKind kind) {
    if (order < 2 || order > 64) throw std::domain_error("quadrature order out of range");
    if (edges.size() < 2) throw std::domain_error("quadrature needs at least one panel");
    QuadratureRule r;
    r.edges = edges;
    r.order = order;
    r.kind = kind;
    const GLRule& g = gl_rule(order);
    r.nodes.reserve((edges.size() - 1) * order);
    r.weights.reserve((edges.size() - 1) * order);
    for (size_t j = 0; j + 1 < edges.size(); ++j) {
        // center/halfwidth in dd so consecutive panel images tile exactly
        DDouble c = (DDouble(edges[j]) + DDouble(edges[j + 1])) * 0.5;
        DDouble h = (DDouble(edges[j + 1]) - DDouble(edges[j])) * 0.5;
        if (!(to_double(h) > 0.0)) throw std::domain_error("panel edges must increase");
        for (int i = 0; i < order; ++i) {
            DDouble t = c + h * g.x[i];
            DDouble wt = h * g.w[i];
            if (kind == RuleKind::doubled) {
                r.nodes.push_back(t * t);
                r.weights.push_back(wt * t * 2.0);
            } else {
                r.nodes.push_back(t);
                r.weights.push_back(wt);
            }
        }
    }
    double t0 = edges.front(), t1 = edges.back();
    r.lo = kind == RuleKind::doubled ? t0 * t0 : t0;
    r.hi = kind == RuleKind::doubled ? t1 * t1 : t1;
    return r;
}

// Find X with g(X) = g_peak - drop, assuming g decays beyond its peak.
inline double find_truncation(double a, const std::function<double(double)>& g,
                              double drop) {
    double gmax = -std::numeric_limits<double>::infinity(), ym = 0.0;
    for (int k = -30; k <= 100; ++k) {
        double y = std::ldexp(1.0, k);
        if (y <= a) continue;
        double gv = g(y);
        if (std::isfinite(gv) && gv > gmax) { gmax = gv; ym = y; }
    }
    if (!std::isfinite(gmax))
        throw std::runtime_error("decay hint has no finite values");
    double target = gmax - drop;
    double y = ym;
    while (g(y) > target) {
        y *= 2.0;
        if (y > 1e300) throw std::runtime_error("integrand tail never reaches the requested decay");
    }
    double ylo = std::max(a, y * 0.5), yhi = y;
    for (int it = 0; it < 80; ++it) {
        double mid = 0.5 * (ylo + yhi);
        (g(mid) > target ? ylo : yhi) = mid;
    }
    return yhi;
}

// Panels sized so the log envelope moves by at most a few units per panel.
inline std::vector<double> march_edges(double t0, double t1,
                                       const std::function<double(double)>& gt) {
    if (!gt) {
        std::vector<double> e(9);
        for (int i = 0; i <= 8; ++i) e[i] = t0 + (t1 - t0) * i / 8.0;
        return e;
    }
    const int M = 512;
    std::vector<double> gm(M);
    double last = 0.0;
    bool seen = false;
    for (int i = 0; i < M; ++i) {
        double t = t0 + (t1 - t0) * (i + 0.5) / M;
        double gv = gt(t);
        if (std::isfinite(gv)) { last = gv; seen = true; }
        gm[i] = seen ? (std::isfinite(gv) ? gv : last) : 0.0;
    }
    double cap = (t1 - t0) / 4.0;
    for (double thresh = 4.0;; thresh *= 2.0) {
        std::vector<double> e{t0};
        double gref = gm[0], start = t0;
        for (int i = 1; i < M; ++i) {
            double t = t0 + (t1 - t0) * double(i) / M;
            if (std::fabs(gm[i] - gref) > thresh || t - start >= cap) {
                e.push_back(t);
                gref = gm[i];
                start = t;
            }
        }
        e.push_back(t1);
        if (e.size() <= 81 || thresh > 4096.0) return e;
    }
}

} // namespace detail

inline QuadratureRule QuadratureRule::refined(int factor) const {
    std::vector<double> e2;
    for (size_t j = 0; j + 1 < edges.size(); ++j)
        for (int s = 0; s < factor; ++s)
            e2.push_back(edges[j] + (edges[j + 1] - edges[j]) * s / double(factor));
    e2.push_back(edges.back());
    auto r = detail::rule_from_edges(e2, order, kind);
    r.truncated = truncated;
    return r;
}

// Composite rule with uniform panels; building block and test utility.
inline QuadratureRule panel_rule(double a, double b, int panels, int order,
                                 bool doubled = false) {
    std::vector<double> e(panels + 1);
    double ta = doubled ? std::sqrt(a) : a, tb = doubled ? std::sqrt(b) : b;
    for (int i = 0; i <= panels; ++i) e[i] = ta + (tb - ta) * i / double(panels);
    return detail::rule_from_edges(e, order,
                                   doubled ? RuleKind::doubled : RuleKind::legendre_panels);
}

// Build a rule for [a,b] (b may be +inf) from the decay hint.  extra_log_drop
// deepens the truncation beyond what target_rel_tol asks, for consumers whose
// own cancellation eats accuracy (double-double bimoment sweeps).
inline QuadratureRule build_quadrature(double a, double b, double target_rel_tol,
                                       const DecayHint& hint = {},
                                       double extra_log_drop = 0.0) {
    if (!(target_rel_tol >= 1e-30 && target_rel_tol <= 1e-6))
        throw std::domain_error("target_rel_tol out of [1e-30, 1e-6]");
    if (!(a >= 0.0)) throw std::domain_error("left endpoint must be >= 0");
    bool infinite = !std::isfinite(b);
    if (infinite && !hint.log_env)
        throw std::domain_error("infinite domain needs a decay envelope");

    double drop = -std::log(target_rel_tol) + 17.0 + extra_log_drop;
    if (infinite) b = detail::find_truncation(a, hint.log_env, drop);
    if (!(b > a)) throw std::domain_error("empty integration interval");

    // substitute y = t^2 when a fractional power singularity sits at y = 0
    double se = hint.singular_exponent;
    bool fractional = std::fabs(se - std::round(se)) > 1e-9;
    if (se < 0.0 && !fractional && a == 0.0)
        throw std::domain_error("non-integrable endpoint exponent");
    if (fractional && se <= -1.0 && a == 0.0)
        throw std::domain_error("non-integrable endpoint exponent");
    bool subst = fractional && a == 0.0;
    double t0 = subst ? 0.0 : a, t1 = subst ? std::sqrt(b) : b;

    std::function<double(double)> gt;
    if (hint.log_env) {
        auto ge = hint.log_env;
        gt = subst ? std::function<double(double)>([ge](double t) { return ge(t * t); })
                   : ge;
    }
    auto edges = detail::march_edges(t0, t1, gt);

    // geometric grading toward a fractional singularity at t = 0
    double beta = subst ? 2.0 * se + 1.0 : se;
    if (t0 == 0.0 && std::fabs(beta - std::round(beta)) > 1e-9) {
        int m = int(std::ceil((drop - 12.0) / ((beta + 1.0) * std::log(4.0))));
        m = std::min(std::max(m, 1), 60);
        double e1 = edges[1];
        std::vector<double> graded{0.0};
        for (int j = m; j >= 1; --j) graded.push_back(e1 * std::pow(0.25, j));
        graded.insert(graded.end(), edges.begin() + 1, edges.end());
        edges = std::move(graded);
    }

    int order = std::clamp(int(8 - 2.0 * std::floor(std::log10(target_rel_tol))), 20, 64);
    auto r = detail::rule_from_edges(edges, order,
                                     subst ? RuleKind::doubled : RuleKind::legendre_panels);
    r.truncated = infinite;
    return r;
}

// Panel-doubling integration to a requested relative tolerance, for one-off
// integrals and oracles.  f returns LogScaled<T>.
template <class T, class F>
LogScaled<T> adaptive_integrate(F&& f, double a, double b, double rel_tol,
                                int order = 24) {
    LogScaled<T> prev{};
    for (int panels = 1; panels <= 4096; panels *= 2) {
        auto rule = panel_rule(a, b, panels, order);
        auto cur = rule.template integrate_ls<T>(f);
        if (panels > 1 && rel_diff(cur, prev) < rel_tol) return cur;
        prev = cur;
    }
    throw std::runtime_error("adaptive_integrate did not converge");
}

} // namespace c2mm

#endif
