// Correlation kernel of the squared-singular-value process and its
// determinantal statistics: pointwise K_n, mean density, Fredholm gap
// probabilities, and rescaled comparisons against the sine / Airy / Bessel
// limit kernels.
//
// The kernel needs all n biorthogonal families, and the bimoment route runs
// out of digits near degree 10 (the Gram matrix is Hankel-like), so the
// evaluator builds P_k and Q_k directly as values on the two quadrature
// grids by two-sided modified Gram-Schmidt against the coupled weight, and
// replays the projection recurrence P_j = x P_{j-1} - sum_k c_{jk} P_k for
// off-grid points.  The coupling factor is applied through its entire-series
// factorization w(x,y) = sum_m c_m (xy)^{m+nu/2} e^{-nV(x)-nW(y)}: each term
// is separable, so a pairing costs M (nx + ny) instead of nx ny, the weight
// never materializes as a table, and every entry is an exp() of an exactly
// assembled exponent.
//
// The x-side inner products are benign (P_k phi_k is pointwise positive),
// but the transform phi_k(x) = int w(x,y) Q_k(y) dy cancels by roughly a
// factor 5 per degree and the family error compounds faster (~10^0.86 per
// degree measured pointwise), so the working precision R of the value
// tables bounds the reachable degree: double holds to n ~ 12, double-double
// to n ~ 30, quad-double to the n = 36 ladder rung and past it.
#ifndef C2MM_KERNEL_HPP
#define C2MM_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bessel.hpp"
#include "biortho.hpp"
#include "log_scaled.hpp"
#include "model.hpp"
#include "quadrature.hpp"

namespace c2mm {

// ---------------------------------------------------------------------------
// Reference kernels for the three scaling limits.

inline double sine_kernel(double u, double v) {
    double t = M_PI * (u - v);
    if (std::fabs(t) < 1e-4) return 1.0 - t * t / 6.0;
    return std::sin(t) / t;
}

inline double airy_kernel(double u, double v) {
    double aiu, apu, aiv, apv;
    if (std::fabs(u - v) < 1e-6) {
        double m = 0.5 * (u + v);
        airy_ai_pair(m, aiu, apu);
        return apu * apu - m * aiu * aiu;
    }
    airy_ai_pair(u, aiu, apu);
    airy_ai_pair(v, aiv, apv);
    return (aiu * apv - apu * aiv) / (u - v);
}

// Bessel kernel of order nu in the squared variable (hard-edge limit).
inline double hard_edge_kernel(double nu, double u, double v) {
    if (u < 0.0 || v < 0.0)
        throw std::domain_error("hard_edge_kernel: negative argument");
    if (std::fabs(u - v) < 1e-8 * (1.0 + std::fabs(u + v))) {
        double m = 0.5 * (u + v);
        if (m == 0.0) return nu == 0.0 ? 0.25 : 0.0;
        double s = std::sqrt(m);
        double j = bessel_j(nu, s);
        return 0.25 * (j * j - bessel_j(nu + 1.0, s) * bessel_j(nu - 1.0, s));
    }
    double su = std::sqrt(u), sv = std::sqrt(v);
    double ju = bessel_j(nu, su), jv = bessel_j(nu, sv);
    // sqrt(x) J_nu'(sqrt(x)) -> 0 at x = 0 for every nu > -1; avoid 0 * inf
    double gu = su == 0.0 ? 0.0 : su * bessel_j_prime(nu, su);
    double gv = sv == 0.0 ? 0.0 : sv * bessel_j_prime(nu, sv);
    return (ju * gv - gu * jv) / (2.0 * (u - v));
}

// ---------------------------------------------------------------------------
// Nystrom discretization on [a,b] with square-root weight symmetrization,
// and the Fredholm determinant det(I - K|_[a,b]) through pivoted LU.

template <class KF>
Eigen::MatrixXd nystrom_matrix(KF&& K, double a, double b, int m) {
    if (!(b > a)) throw std::domain_error("nystrom: empty interval");
    if (m < 16) throw std::domain_error("nystrom: order below 16");
    // m is the total point count, split over panels past the single-panel cap
    int panels = 1 + (m - 1) / 64;
    int order = (m + panels - 1) / panels;
    QuadratureRule rule = panel_rule(a, b, panels, order);
    const int N = int(rule.size());
    std::vector<double> t(static_cast<size_t>(N)), sw(static_cast<size_t>(N));
    for (int i = 0; i < N; ++i) {
        t[size_t(i)] = to_double(rule.nodes[size_t(i)]);
        sw[size_t(i)] = std::sqrt(to_double(rule.weights[size_t(i)]));
    }
    Eigen::MatrixXd G(N, N);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j)
            G(i, j) = sw[size_t(i)] * K(t[size_t(i)], t[size_t(j)]) * sw[size_t(j)];
    return G;
}

template <class KF>
double fredholm_gap(KF&& K, double a, double b, int m) {
    Eigen::MatrixXd G = nystrom_matrix(std::forward<KF>(K), a, b, m);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(G.rows(), G.cols()) - G;
    return A.partialPivLu().determinant();
}

// ---------------------------------------------------------------------------
// Evaluator options and gap-request plumbing.

struct KernelOptions {
    double rel_tol = 0.0; // 0 -> default weight tolerance for R
    int refine = 1;       // grid refinement factor for self-convergence runs
    int gs_rounds = 2;    // re-projection passes per degree
    int terms = 0;        // 0 -> spec.n; anything above spec.n is refused
    int cache_degree = 40;
    double cache_tol = 1e-9;
};

struct GapRequest {
    double a = 0.0, b = 0.0;
    int m = 48;
};

namespace detail {

// Smooth log-envelope of the weight row x -> max_y w(x,y).  weight_saddle's
// lattice scan leaves ~1% jitter in the argmax, which a Chebyshev fit of
// phi_k would inherit as kinks, so the saddle is polished by Newton in y.
inline double row_envelope(const ModelSpec& s, const Poly& w1, const Poly& w2,
                           double x) {
    if (!(x > 0.0)) return -1e300;
    auto [smax, y] = weight_saddle(s, x);
    double rx = std::sqrt(x);
    for (int it = 0; it < 4; ++it) {
        double ry = std::sqrt(y);
        double g1 = s.tau * rx / ry - w1(y);
        double g2 = -0.5 * s.tau * rx / (ry * y) - w2(y);
        if (!(g2 < 0.0)) break; // off the concave basin: keep the scan value
        double step = g1 / g2;
        if (std::fabs(step) > 0.5 * y) step = step > 0.0 ? 0.5 * y : -0.5 * y;
        y -= step;
        if (!(y > 0.0)) { y = 1e-300; break; }
    }
    double phi = 2.0 * s.tau * rx * std::sqrt(y) - s.W(y);
    (void)smax;
    return double(s.n) * (phi - s.V(x)) + 0.5 * s.nu * std::log(x * y);
}

// Chebyshev-Lobatto transform: values at t_i = cos(pi i / D) to coefficients
// of f(t) = a_0/2 + sum_{1}^{D-1} a_m T_m + a_D T_D / 2, and Clenshaw back.
inline void cheb_coeffs(const double* v, int D, double* a) {
    for (int m = 0; m <= D; ++m) {
        double acc = 0.5 * (v[0] + ((m % 2) ? -v[D] : v[D]));
        for (int i = 1; i < D; ++i)
            acc += v[i] * std::cos(M_PI * double(m) * double(i) / double(D));
        a[m] = 2.0 / double(D) * acc;
    }
}
inline double cheb_eval(const double* a, int D, double t) {
    double b1 = 0.0, b2 = 0.0;
    for (int m = D; m >= 1; --m) {
        double c = (m == D) ? 0.5 * a[m] : a[m];
        double b0 = 2.0 * t * b1 - b2 + c;
        b2 = b1;
        b1 = b0;
    }
    return t * b1 - b2 + 0.5 * a[0];
}

} // namespace detail

// ---------------------------------------------------------------------------
// KernelEvaluator: K_n(x1,x2) = sum_{k<n} phi_k(x1) P_k(x2) / kappa_k with
// phi_k(x) = int w_n(x,y) Q_k(y) dy.  R is the working precision of the
// value tables; inputs and outputs are double either way.

template <class R = double>
class KernelEvaluator {
  public:
    // Interval-scoped Chebyshev table of all n transformed functions phi_k,
    // gauged by the smooth row envelope.  `ok` means every family passed the
    // off-node probe; callers fall back to direct quadrature otherwise.
    struct PhiCache {
        double lo = 0.0, hi = 0.0;
        int deg = 0;
        bool ok = false;
        Eigen::MatrixXd coef;        // (deg+1) x n
        std::vector<double> fscale;  // per-family amplitude on the interval
        std::vector<char> live;
        std::vector<double> err;     // probe error relative to fscale
        bool covers(double x) const { return x >= lo && x <= hi; }
    };

    explicit KernelEvaluator(ModelSpec s, KernelOptions opt = {}) : spec_(std::move(s)) {
        if (!(spec_.tau > 0.0))
            throw std::domain_error("kernel evaluator: needs tau > 0");
        terms_ = opt.terms > 0 ? opt.terms : spec_.n;
        if (terms_ > spec_.n)
            throw std::domain_error(
                "kernel evaluator: requested more terms than the weight degree supports");
        if (terms_ < 1 || terms_ > 128)
            throw std::domain_error("kernel evaluator: term count out of range");
        if (opt.gs_rounds < 1 || opt.gs_rounds > 8)
            throw std::domain_error("kernel evaluator: gs_rounds out of range");
        opt_ = opt;
        build();
    }

    const ModelSpec& spec() const { return spec_; }
    int terms() const { return terms_; }

    double operator()(double x1, double x2) const {
        return to_double(kernel_ls(x1, x2).decode());
    }
    double kernel_cached(double x1, double x2, const PhiCache& pc) const {
        return to_double(kernel_ls(x1, x2, &pc).decode());
    }

    LogScaled<double> kernel_ls(double x1, double x2, const PhiCache* pc = nullptr) const {
        if (!(x1 >= 0.0) || !(x2 >= 0.0) || !std::isfinite(x1) || !std::isfinite(x2))
            throw std::domain_error("kernel: arguments must lie in [0, inf)");
        std::vector<R> f(static_cast<size_t>(terms_)), pk(static_cast<size_t>(terms_));
        double ls;
        if (pc && pc->ok && pc->covers(x1)) {
            double t = (2.0 * x1 - pc->lo - pc->hi) / (pc->hi - pc->lo);
            t = std::min(1.0, std::max(-1.0, t));
            for (int k = 0; k < terms_; ++k)
                f[size_t(k)] = R(pc->fscale[size_t(k)] *
                                 detail::cheb_eval(&pc->coef(0, k), pc->deg, t));
            ls = env_(x1);
        } else {
            ls = phi_row(x1, f);
        }
        double loff = rec_values(prec_, x2, pk);
        R sum(0.0);
        for (int k = 0; k < terms_; ++k)
            sum += (f[size_t(k)] / kap_[size_t(k)]) * pk[size_t(k)];
        return LogScaled<double>(to_double(sum), ls + loff - shift_);
    }

    double density(double x) const {
        return to_double(kernel_ls(x, x).decode()) / double(terms_);
    }
    std::vector<std::pair<double, double>> mean_density(const std::vector<double>& grid) const {
        std::vector<std::pair<double, double>> out;
        out.reserve(grid.size());
        for (double x : grid) {
            if (!(x > 0.0))
                throw std::domain_error("mean density: grid points must be positive");
            out.emplace_back(x, density(x));
        }
        return out;
    }

    // integral of the diagonal over the construction grid; n up to rounding
    double trace() const { return cum_.empty() ? 0.0 : cum_.back(); }

    // x below which the diagonal holds the fraction q of the total mass
    double quantile(double q) const {
        if (!(q >= 0.0) || !(q < 1.0))
            throw std::domain_error("quantile: q must lie in [0,1)");
        double target = q * cum_.back();
        size_t i = size_t(std::lower_bound(cum_.begin(), cum_.end(), target) - cum_.begin());
        if (i == 0) return xs_[0];
        if (i >= cum_.size()) return xs_.back();
        double c0 = cum_[i - 1], c1 = cum_[i];
        double x0 = xs_[i - 1], x1 = xs_[i];
        return c1 > c0 ? x0 + (x1 - x0) * (target - c0) / (c1 - c0) : x1;
    }

    double gap_probability(double a, double b, int m) const {
        if (!(a >= 0.0) || !(b > a) || !std::isfinite(b))
            throw std::domain_error("gap probability: need 0 <= a < b < inf");
        if (m < 16) throw std::domain_error("gap probability: Nystrom order below 16");
        PhiCache pc = build_phi_cache(a, b);
        auto K = [this, &pc](double t, double s) { return kernel_cached(t, s, pc); };
        double det = fredholm_gap(K, a, b, m);
        if (!std::isfinite(det) || det < -1e-6)
            throw std::runtime_error("gap probability: Nystrom determinant failed");
        return det < 0.0 ? 0.0 : det;
    }
    double gap_probability(const GapRequest& req) const {
        return gap_probability(req.a, req.b, req.m);
    }

    // ---- family access (testing and cross-checks) ----
    LogScaled<double> kappa(int k) const {
        check_k(k);
        return LogScaled<double>(to_double(kap_[size_t(k)]), shift_);
    }
    LogScaled<double> phi_value(int k, double x) const {
        check_k(k);
        std::vector<R> f(static_cast<size_t>(terms_));
        double ls = phi_row(x, f);
        return LogScaled<double>(to_double(f[size_t(k)]), ls);
    }
    LogScaled<double> p_value(int k, double x) const {
        check_k(k);
        std::vector<R> pk(static_cast<size_t>(terms_));
        double loff = rec_values(prec_, x, pk);
        return LogScaled<double>(to_double(pk[size_t(k)]), loff);
    }
    LogScaled<double> q_value(int k, double y) const {
        check_k(k);
        std::vector<R> qk(static_cast<size_t>(terms_));
        double loff = rec_values(qrec_, y, qk);
        return LogScaled<double>(to_double(qk[size_t(k)]), loff);
    }

    // ---- construction diagnostics ----
    double gs_residual() const { return gs_residual_; }   // worst off-diagonal
    double kappa_cross() const { return kappa_cross_; }   // x- vs y-route kappa
    const QuadratureRule& x_rule() const { return xrule_; }
    const QuadratureRule& y_rule() const { return yrule_; }

    // Build the phi table on [lo,hi]; always safe to use, it reports whether
    // it met the probe tolerance and the evaluator ignores it when it did not.
    PhiCache build_phi_cache(double lo, double hi) const {
        if (!(hi > lo) || !(lo >= 0.0) || !std::isfinite(hi))
            throw std::domain_error("phi cache: bad interval");
        PhiCache pc;
        pc.lo = lo;
        pc.hi = hi;
        pc.deg = opt_.cache_degree;
        const int D = pc.deg;
        const int n = terms_;
        Eigen::MatrixXd vhat(D + 1, n);
        std::vector<R> f(static_cast<size_t>(n));
        for (int i = 0; i <= D; ++i) {
            double t = std::cos(M_PI * double(i) / double(D));
            double x = 0.5 * ((hi + lo) + (hi - lo) * t);
            double ls = phi_row(x, f);
            double g = env_(x);
            double fac = std::exp(ls - g); // moderate by construction of env_
            for (int k = 0; k < n; ++k) vhat(i, k) = to_double(f[size_t(k)]) * fac;
        }
        pc.coef.resize(D + 1, n);
        pc.fscale.assign(size_t(n), 0.0);
        pc.live.assign(size_t(n), 0);
        pc.err.assign(size_t(n), 0.0);
        std::vector<double> col(static_cast<size_t>(D + 1)), cf(static_cast<size_t>(D + 1));
        for (int k = 0; k < n; ++k) {
            double amp = vhat.col(k).cwiseAbs().maxCoeff();
            pc.fscale[size_t(k)] = amp;
            if (amp == 0.0 || !std::isfinite(amp)) continue; // dead family
            for (int i = 0; i <= D; ++i) col[size_t(i)] = vhat(i, k) / amp;
            detail::cheb_coeffs(col.data(), D, cf.data());
            for (int i = 0; i <= D; ++i) pc.coef(i, k) = cf[size_t(i)];
            pc.live[size_t(k)] = 1;
        }
        // off-node probes, error measured against the family amplitude
        const int probes[] = {1, 7, 13, 19, 25, 31, 38};
        for (int pi : probes) {
            double t = std::cos(M_PI * (double(pi) + 0.5) / double(D));
            double x = 0.5 * ((hi + lo) + (hi - lo) * t);
            double ls = phi_row(x, f);
            double g = env_(x);
            double fac = std::exp(ls - g);
            for (int k = 0; k < n; ++k) {
                if (!pc.live[size_t(k)]) continue;
                double direct = to_double(f[size_t(k)]) * fac;
                double fitted = pc.fscale[size_t(k)] *
                                detail::cheb_eval(&pc.coef(0, k), D, t);
                double e = std::fabs(fitted - direct) / pc.fscale[size_t(k)];
                if (e > pc.err[size_t(k)]) pc.err[size_t(k)] = e;
            }
        }
        pc.ok = true;
        for (int k = 0; k < n; ++k)
            if (!pc.live[size_t(k)] || pc.err[size_t(k)] > opt_.cache_tol) pc.ok = false;
        return pc;
    }

  private:
    void check_k(int k) const {
        if (k < 0 || k >= terms_) throw std::out_of_range("kernel: family index");
    }

    // fresh transform row from the factorized coupling and the stored y-side
    // pairings: f[k] = phi_k(x) e^{-return}, cancellation resolved in R.
    // Gauges am_/bm_/lmax are plain doubles embedded exactly into R, so they
    // cancel exactly between the column tables and the coefficients here.
    double phi_row(double x, std::vector<R>& f) const {
        if (!(x >= 0.0)) throw std::domain_error("kernel: x must be >= 0");
        std::fill(f.begin(), f.end(), R(0.0));
        const int M = mser_, n = terms_;
        if (x == 0.0) {
            // x^{m+nu/2} kills every term except m = 0 at nu = 0
            if (spec_.nu != 0.0) return 0.0;
            R e0 = gam_[0] * 0.5; // V(0) = 0: ModelSpec strips constant terms
            double lmax = to_double(e0) + bm_[0];
            R c = detail::exp_any<R>(e0 + (R(bm_[0]) - R(lmax)));
            for (int k = 0; k < n; ++k) f[size_t(k)] = c * hq_[size_t(k)];
            return lmax;
        }
        R lx = detail::log_any(R(x));
        R nvx = R(double(spec_.n)) * spec_.V(R(x));
        const R half_nu = R(0.5 * spec_.nu);
        std::vector<R> E(static_cast<size_t>(M));
        double lmax = -std::numeric_limits<double>::infinity();
        for (int m = 0; m < M; ++m) {
            E[size_t(m)] = (R(double(m)) + half_nu) * lx - nvx + gam_[size_t(m)] * 0.5;
            double t = to_double(E[size_t(m)]) + bm_[size_t(m)];
            if (t > lmax) lmax = t;
        }
        if (!std::isfinite(lmax)) return 0.0;
        for (int m = 0; m < M; ++m) {
            double t = to_double(E[size_t(m)]) + bm_[size_t(m)];
            if (t < lmax - 600.0) continue;
            R c = detail::exp_any<R>(E[size_t(m)] + (R(bm_[size_t(m)]) - R(lmax)));
            const R* hrow = hq_.data() + size_t(m) * size_t(n);
            for (int k = 0; k < n; ++k) f[size_t(k)] += c * hrow[k];
        }
        return lmax;
    }

    // replay a projection recurrence at one point with power-of-two rescaling
    // against overflow; true value = out[k] * e^{return}.
    double rec_values(const std::vector<std::vector<R>>& rec, double x,
                      std::vector<R>& out) const {
        out[0] = R(1.0);
        double loff = 0.0;
        for (int j = 1; j < terms_; ++j) {
            R v = R(x) * out[size_t(j - 1)];
            const auto& cj = rec[size_t(j)];
            for (int k = 0; k < j; ++k) v -= cj[size_t(k)] * out[size_t(k)];
            out[size_t(j)] = v;
            if (std::fabs(to_double(v)) > 1.3407807929942596e154) { // 2^512
                R sc(std::ldexp(1.0, -512));
                for (int k = 0; k <= j; ++k) out[size_t(k)] = out[size_t(k)] * sc;
                loff += 512.0 * M_LN2;
            }
        }
        return loff;
    }

    void build() {
        const int n = terms_;
        // The transform phi_k(x) = int w(x,y) Q_k(y) dy cancels by roughly
        // 0.71 decades per degree (the x-side products are positive), so the
        // discrete pairing must be faithful to below kappa_{n-1}'s depth:
        // both the panel tolerance and the coverage window scale with n, and
        // the envelope powers are sized for the top product P_{n-1} phi_{n-1},
        // not for the bare weight.  Miss any of these and Gram-Schmidt still
        // converges - to self-consistent grid artifacts with wild kernels.
        double tol = opt_.rel_tol;
        if (tol <= 0.0) {
            double need = std::pow(10.0, -(0.71 * double(n) + 2.0));
            double floorv = scalar_info<R>::digits10 >= 60   ? 1e-30
                            : scalar_info<R>::digits10 >= 30 ? 1e-28
                                                             : 1e-14;
            tol = std::max(std::min(detail::default_weight_tol<R>(), need), floorv);
        }
        // extra coverage in nats beyond what tol already buys, with slack for
        // the y^k-shifted saddles the envelope model underestimates
        const double drop =
            std::max(detail::drop_for<R>(tol), 1.64 * double(n) + 16.0);
        xrule_ = detail::outer_rule(spec_, spec_.nu + 2.0 * double(n - 1), n - 1,
                                    tol, drop);
        ModelSpec tsp(spec_.nu, spec_.tau, spec_.n, spec_.W, spec_.V);
        yrule_ = detail::outer_rule(tsp, spec_.nu + 2.0 * double(n - 1), n - 1,
                                    tol, drop);
        if (opt_.refine > 1) {
            xrule_ = xrule_.refined(opt_.refine);
            yrule_ = yrule_.refined(opt_.refine);
        }
        const size_t nx = xrule_.size(), ny = yrule_.size();
        if (nx > 400000 || ny > 400000)
            throw std::runtime_error("kernel construction: quadrature grid out of hand (" +
                                     std::to_string(nx) + " x " + std::to_string(ny) + ")");
        xs_.resize(nx); xw_.resize(nx); ys_.resize(ny); yw_.resize(ny);
        xsr_.resize(nx); xwr_.resize(nx); ysr_.resize(ny); ywr_.resize(ny);
        for (size_t i = 0; i < nx; ++i) {
            xsr_[i] = detail::dd_cast<R>(xrule_.nodes[i]);
            xwr_[i] = detail::dd_cast<R>(xrule_.weights[i]);
            xs_[i] = to_double(xsr_[i]);
            xw_[i] = to_double(xwr_[i]);
        }
        for (size_t j = 0; j < ny; ++j) {
            ysr_[j] = detail::dd_cast<R>(yrule_.nodes[j]);
            ywr_[j] = detail::dd_cast<R>(yrule_.weights[j]);
            ys_[j] = to_double(ysr_[j]);
            yw_[j] = to_double(ywr_[j]);
        }

        // Factorized coupling columns: with gam_m = ln c_m computed by exact
        // recurrence from Gamma(nu+1) (same dd source as the moment route, so
        // the two kappa normalizations agree identically),
        //   gx[m](x_i) = exp((m+nu/2) ln x_i - nV(x_i) + gam_m/2 - am[m])
        // and likewise hy on the y grid.  The per-term gauges am/bm are the
        // column log-peaks in plain double; they are embedded exactly into R
        // wherever they reappear, so they are pure bookkeeping.  The series
        // stops once a term's combined peak falls `cut` nats below the best
        // one: such terms sit beneath the working precision of the dominant
        // contribution for every pairing at once.
        std::vector<R> lxs(nx), lys(ny), nvx(nx), nwy(ny);
        for (size_t i = 0; i < nx; ++i) {
            lxs[i] = detail::log_any(xsr_[i]);
            nvx[i] = R(double(spec_.n)) * spec_.V(xsr_[i]);
        }
        for (size_t j = 0; j < ny; ++j) {
            lys[j] = detail::log_any(ysr_[j]);
            nwy[j] = R(double(spec_.n)) * spec_.W(ysr_[j]);
        }
        const double cut = 2.6 * double(scalar_info<R>::digits10) + 12.0;
        const R lcoup = detail::log_any(R(spec_.tau) * R(double(spec_.n)));
        const R nuR = R(spec_.nu);
        gx_.clear(); hy_.clear(); gam_.clear(); am_.clear(); bm_.clear();
        {
            std::vector<R> Eg(nx), Eh(ny);
            R gm = R(spec_.nu) * lcoup -
                   detail::log_any(detail::dd_cast<R>(
                       detail::dd_gamma(DDouble(spec_.nu) + 1.0)));
            double peak = -std::numeric_limits<double>::infinity();
            for (int m = 0;; ++m) {
                if (m > 4000)
                    throw std::runtime_error(
                        "kernel construction: coupling series failed to decay");
                if (m > 0)
                    gm = gam_.back() + (2.0 * lcoup - detail::log_any(R(double(m))) -
                                        detail::log_any(R(double(m) + spec_.nu)));
                const R gh = gm * 0.5;
                const R dm = R(double(m)) + nuR;
                double am = -std::numeric_limits<double>::infinity(), bm = am;
                for (size_t i = 0; i < nx; ++i) {
                    Eg[i] = dm * lxs[i] - nvx[i] + gh;
                    am = std::max(am, to_double(Eg[i]));
                }
                for (size_t j = 0; j < ny; ++j) {
                    Eh[j] = dm * lys[j] - nwy[j] + gh;
                    bm = std::max(bm, to_double(Eh[j]));
                }
                double pk = am + bm;
                if (pk > peak) peak = pk;
                if (pk < peak - cut) break;
                gam_.push_back(gm);
                am_.push_back(am);
                bm_.push_back(bm);
                size_t bg = gx_.size(), bh = hy_.size();
                gx_.resize(bg + nx);
                hy_.resize(bh + ny);
                for (size_t i = 0; i < nx; ++i)
                    gx_[bg + i] = to_double(Eg[i]) - am < -600.0
                                      ? R(0.0)
                                      : detail::exp_any<R>(Eg[i] - R(am));
                for (size_t j = 0; j < ny; ++j)
                    hy_[bh + j] = to_double(Eh[j]) - bm < -600.0
                                      ? R(0.0)
                                      : detail::exp_any<R>(Eh[j] - R(bm));
            }
            shift_ = peak;
        }
        mser_ = int(am_.size());
        if (!std::isfinite(shift_))
            throw std::runtime_error("kernel construction: weight vanished on the grid");
        edm_.assign(size_t(mser_), R(0.0));
        for (int m = 0; m < mser_; ++m)
            edm_[size_t(m)] =
                detail::exp_any<R>((R(am_[size_t(m)]) - R(shift_)) + R(bm_[size_t(m)]));

        // two-sided modified Gram-Schmidt, opt_.gs_rounds projection passes;
        // round coefficients accumulate into the off-grid recurrences.
        std::vector<std::vector<R>> Pv, Qv, Phi, Chi;
        Pv.resize(size_t(n));
        Qv.resize(size_t(n));
        Phi.resize(size_t(n));
        Chi.resize(size_t(n));
        prec_.assign(size_t(n), {});
        qrec_.assign(size_t(n), {});
        kap_.assign(size_t(n), R(0.0));
        kappa_cross_ = 0.0;
        auto wdot = [](const std::vector<R>& w, const std::vector<R>& a,
                       const std::vector<R>& b) {
            R s(0.0);
            for (size_t i = 0; i < w.size(); ++i) s += w[i] * a[i] * b[i];
            return s;
        };
        // weight-matrix action in factorized form: W s = sum_m edm[m] gx_m (hy_m . s),
        // so each application costs mser (nx + ny) instead of nx ny
        auto applyW = [&](const std::vector<R>& s, std::vector<R>& out) {
            std::fill(out.begin(), out.end(), R(0.0));
            for (int m = 0; m < mser_; ++m) {
                const R* hrow = hy_.data() + size_t(m) * ny;
                R dot(0.0);
                for (size_t j = 0; j < ny; ++j) dot += hrow[j] * s[j];
                R c = dot * edm_[size_t(m)];
                if (to_double(c) == 0.0) continue;
                const R* grow = gx_.data() + size_t(m) * nx;
                for (size_t i = 0; i < nx; ++i) out[i] += c * grow[i];
            }
        };
        auto applyWT = [&](const std::vector<R>& s, std::vector<R>& out) {
            std::fill(out.begin(), out.end(), R(0.0));
            for (int m = 0; m < mser_; ++m) {
                const R* grow = gx_.data() + size_t(m) * nx;
                R dot(0.0);
                for (size_t i = 0; i < nx; ++i) dot += grow[i] * s[i];
                R c = dot * edm_[size_t(m)];
                if (to_double(c) == 0.0) continue;
                const R* hrow = hy_.data() + size_t(m) * ny;
                for (size_t j = 0; j < ny; ++j) out[j] += c * hrow[j];
            }
        };
        for (int j = 0; j < n; ++j) {
            std::vector<R> pv(nx), qv(ny);
            if (j == 0) {
                std::fill(pv.begin(), pv.end(), R(1.0));
                std::fill(qv.begin(), qv.end(), R(1.0));
            } else {
                for (size_t i = 0; i < nx; ++i) pv[i] = xsr_[i] * Pv[size_t(j - 1)][i];
                for (size_t i = 0; i < ny; ++i) qv[i] = ysr_[i] * Qv[size_t(j - 1)][i];
                prec_[size_t(j)].assign(size_t(j), R(0.0));
                qrec_[size_t(j)].assign(size_t(j), R(0.0));
                for (int round = 0; round < opt_.gs_rounds; ++round)
                    for (int k = 0; k < j; ++k) {
                        R cp = wdot(xwr_, pv, Phi[size_t(k)]) / kap_[size_t(k)];
                        for (size_t i = 0; i < nx; ++i) pv[i] -= cp * Pv[size_t(k)][i];
                        prec_[size_t(j)][size_t(k)] += cp;
                        R cq = wdot(ywr_, qv, Chi[size_t(k)]) / kap_[size_t(k)];
                        for (size_t i = 0; i < ny; ++i) qv[i] -= cq * Qv[size_t(k)][i];
                        qrec_[size_t(j)][size_t(k)] += cq;
                    }
            }
            // phi_j = W (yw qv), chi_j = W^T (xw pv)
            std::vector<R> phi(nx), chi(ny), tmp(std::max(nx, ny));
            for (size_t i = 0; i < ny; ++i) tmp[i] = ywr_[i] * qv[i];
            applyW(tmp, phi);
            for (size_t i = 0; i < nx; ++i) tmp[i] = xwr_[i] * pv[i];
            applyWT(tmp, chi);
            R kx = wdot(xwr_, pv, phi);
            R ky = wdot(ywr_, qv, chi);
            if (!std::isfinite(to_double(kx)) || to_double(kx) == 0.0)
                throw std::runtime_error("kernel construction: degenerate norm at degree " +
                                         std::to_string(j));
            kap_[size_t(j)] = kx;
            double cross = std::fabs(to_double((kx - ky) / kx));
            if (cross > kappa_cross_) kappa_cross_ = cross;
            Pv[size_t(j)] = std::move(pv);
            Qv[size_t(j)] = std::move(qv);
            Phi[size_t(j)] = std::move(phi);
            Chi[size_t(j)] = std::move(chi);
        }

        // residual biorthogonality <P_j, Q_k> relative to sqrt(kappa_j kappa_k)
        gs_residual_ = 0.0;
        for (int j = 0; j < n; ++j)
            for (int k = 0; k < n; ++k) {
                if (j == k) continue;
                double r = to_double(wdot(xwr_, Pv[size_t(j)], Phi[size_t(k)]));
                double d = std::fabs(r) / std::sqrt(std::fabs(
                               to_double(kap_[size_t(j)]) * to_double(kap_[size_t(k)])));
                if (d > gs_residual_) gs_residual_ = d;
            }

        // diagonal on the x grid and its cumulative mass (trace, quantiles)
        diag_.assign(nx, 0.0);
        for (size_t i = 0; i < nx; ++i) {
            R s(0.0);
            for (int k = 0; k < n; ++k)
                s += Pv[size_t(k)][i] * Phi[size_t(k)][i] / kap_[size_t(k)];
            diag_[i] = to_double(s);
        }
        cum_.assign(nx, 0.0);
        double acc = 0.0;
        for (size_t i = 0; i < nx; ++i) {
            acc += xw_[i] * diag_[i];
            cum_[i] = acc;
        }

        // y-side pairings H[m,k] = sum_j hy_m(y_j) yw_j Q_k(y_j); phi rows then
        // need only the x-side factors, at cost mser * n per point
        hq_.assign(size_t(mser_) * size_t(n), R(0.0));
        {
            std::vector<R> hw(ny);
            for (int m = 0; m < mser_; ++m) {
                const R* hrow = hy_.data() + size_t(m) * ny;
                for (size_t j = 0; j < ny; ++j) hw[j] = hrow[j] * ywr_[j];
                for (int k = 0; k < n; ++k) {
                    R s(0.0);
                    const std::vector<R>& qk = Qv[size_t(k)];
                    for (size_t j = 0; j < ny; ++j) s += hw[j] * qk[j];
                    hq_[size_t(m) * size_t(n) + size_t(k)] = s;
                }
            }
        }

        Poly w1 = spec_.W.derivative();
        Poly w2 = w1.derivative();
        env_ = [s = spec_, w1, w2](double x) {
            return detail::row_envelope(s, w1, w2, x);
        };
    }

    ModelSpec spec_;
    KernelOptions opt_;
    int terms_ = 0;
    QuadratureRule xrule_, yrule_;
    std::vector<double> xs_, xw_, ys_, yw_;
    std::vector<R> xsr_, xwr_, ysr_, ywr_;
    int mser_ = 0;              // retained coupling-series terms
    std::vector<R> gx_, hy_;    // per-term node columns, m-major, gauged to peak 1
    std::vector<double> am_, bm_; // per-term column log-peaks (embedded exactly)
    std::vector<R> edm_;        // e^{am + bm - shift}
    std::vector<R> gam_;        // series coefficient logs gam_m = ln c_m
    std::vector<R> hq_;         // y-side pairings H[m,k], m-major
    std::vector<double> diag_;
    std::vector<double> cum_;
    std::vector<std::vector<R>> prec_, qrec_;
    std::vector<R> kap_; // kappa_k e^{-shift}
    double shift_ = 0.0;
    double gs_residual_ = 0.0;
    double kappa_cross_ = 0.0;
    std::function<double(double)> env_;
};

// Contract-level entry points.
template <class R>
double kernel_eval(const KernelEvaluator<R>& ke, double x1, double x2) {
    return ke(x1, x2);
}
template <class R>
std::vector<std::pair<double, double>>
mean_density(const KernelEvaluator<R>& ke, const std::vector<double>& grid) {
    return ke.mean_density(grid);
}
template <class R>
double gap_probability(const KernelEvaluator<R>& ke, const GapRequest& req) {
    return ke.gap_probability(req);
}

// ---------------------------------------------------------------------------
// Scaling-limit comparison: rescale K_n per regime and report the sup
// deviation from the limit kernel over a window, in the gauge-free form
// (diagonal entries plus sign(K(u,v)K(v,u)) sqrt|..| against |limit|, so the
// harmless (y/x)^gamma prefactor cannot contaminate the comparison).

enum class ScalingRegime { bulk, soft_edge, hard_edge };

struct ScalingReport {
    ScalingRegime regime = ScalingRegime::bulk;
    int n = 0;
    double sup_dev = 0.0;
    double scale = 0.0;       // du/dx of the rescaling
    double origin = 0.0;      // x at u = 0
    double fitted_c = 0.0;    // soft/hard edge constant (reported, not asserted)
    double fitted_edge = 0.0; // soft edge location
};

namespace detail {

// Least-squares fit rho_n(x) ~ C sqrt(b - x) below the upper edge.
template <class R>
std::pair<double, double> fit_soft_edge(const KernelEvaluator<R>& ke) {
    double x99 = ke.quantile(0.99);
    const int npts = 24;
    std::vector<double> xf(static_cast<size_t>(npts)), rf(static_cast<size_t>(npts));
    for (int i = 0; i < npts; ++i) {
        xf[size_t(i)] = x99 * (0.75 + 0.235 * double(i) / double(npts - 1));
        rf[size_t(i)] = ke.density(xf[size_t(i)]);
        if (!(rf[size_t(i)] > 0.0))
            throw std::runtime_error("soft-edge scaling: density not positive below the edge");
    }
    double bestb = 0.0, bestc = 0.0, bestres = std::numeric_limits<double>::infinity();
    for (int t = 0; t <= 200; ++t) {
        double b = x99 * (0.99 + 0.51 * double(t) / 200.0);
        double num = 0.0, den = 0.0;
        for (int i = 0; i < npts; ++i) {
            double s = std::sqrt(b - xf[size_t(i)]);
            num += rf[size_t(i)] * s;
            den += s * s;
        }
        double C = num / den;
        double res = 0.0;
        for (int i = 0; i < npts; ++i) {
            double d = rf[size_t(i)] - C * std::sqrt(b - xf[size_t(i)]);
            res += d * d;
        }
        if (res < bestres) { bestres = res; bestb = b; bestc = C; }
    }
    if (!(bestc > 0.0))
        throw std::runtime_error("soft-edge scaling: no square-root vanishing found");
    return {bestc, bestb};
}

// rho_n(x) ~ A / sqrt(x) near the origin; slope check rejects specs whose
// density does not blow up there.
template <class R>
double fit_hard_edge(const KernelEvaluator<R>& ke) {
    double x99 = ke.quantile(0.99);
    const int npts = 16;
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    double mean_la = 0.0;
    for (int i = 0; i < npts; ++i) {
        double lx = std::log(1e-4) + (std::log(1e-2) - std::log(1e-4)) *
                                         double(i) / double(npts - 1);
        double x = x99 * std::exp(lx);
        double a = ke.density(x) * std::sqrt(x);
        if (!(a > 0.0))
            throw std::runtime_error("hard-edge scaling: density vanishes at the origin");
        double la = std::log(a);
        sx += lx; sy += la; sxx += lx * lx; sxy += lx * la;
        mean_la += la;
    }
    double slope = (double(npts) * sxy - sx * sy) / (double(npts) * sxx - sx * sx);
    if (std::fabs(slope) > 0.15)
        throw std::runtime_error(
            "hard-edge scaling: density does not grow like x^{-1/2} at the origin");
    return std::exp(mean_la / double(npts));
}

} // namespace detail

template <class R>
ScalingReport scaling_limit_compare(const KernelEvaluator<R>& ke, ScalingRegime regime,
                                    double xstar, const std::vector<double>& window) {
    const ModelSpec& s = ke.spec();
    if (s.n % 3 != 0)
        throw std::domain_error("scaling comparison: n must be divisible by 3");
    if (window.size() < 2)
        throw std::domain_error("scaling comparison: window needs at least two points");
    ScalingReport rep;
    rep.regime = regime;
    rep.n = s.n;
    std::function<double(double, double)> limit;
    switch (regime) {
        case ScalingRegime::bulk: {
            double rho = ke.density(xstar);
            if (!(rho > 1e-8))
                throw std::runtime_error("bulk scaling: density vanishes at the given point");
            rep.origin = xstar;
            rep.scale = double(s.n) * rho;
            limit = [](double u, double v) { return sine_kernel(u, v); };
        } break;
        case ScalingRegime::soft_edge: {
            auto [C, b] = detail::fit_soft_edge(ke);
            rep.fitted_c = M_PI * C;
            rep.fitted_edge = b;
            rep.origin = b;
            rep.scale = std::pow(rep.fitted_c * double(s.n), 2.0 / 3.0);
            limit = [](double u, double v) { return airy_kernel(u, v); };
        } break;
        case ScalingRegime::hard_edge: {
            if (xstar != 0.0)
                throw std::domain_error("hard-edge scaling: the comparison point is x* = 0");
            double A = detail::fit_hard_edge(ke);
            rep.fitted_c = 2.0 * M_PI * A;
            double cn = rep.fitted_c * double(s.n);
            rep.origin = 0.0;
            rep.scale = cn * cn;
            limit = [nu = s.nu](double u, double v) { return hard_edge_kernel(nu, u, v); };
        } break;
    }

    const size_t m = window.size();
    std::vector<double> xs(m);
    double xlo = std::numeric_limits<double>::infinity(), xhi = 0.0;
    for (size_t i = 0; i < m; ++i) {
        double x = rep.origin + window[i] / rep.scale;
        if (regime == ScalingRegime::hard_edge && window[i] < 0.0)
            throw std::domain_error("hard-edge scaling: window must be nonnegative");
        if (!(x >= 0.0))
            throw std::domain_error("scaling comparison: window leaves the support");
        xs[i] = x;
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
    }
    typename KernelEvaluator<R>::PhiCache pc =
        ke.build_phi_cache(std::max(0.0, xlo - 1e-12), xhi + 1e-12);
    const Eigen::Index mm = Eigen::Index(m);
    Eigen::MatrixXd Kh(mm, mm);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < m; ++j)
            Kh(Eigen::Index(i), Eigen::Index(j)) =
                ke.kernel_cached(xs[i], xs[j], pc) / rep.scale;

    double sup = 0.0;
    for (size_t i = 0; i < m; ++i) {
        double d = std::fabs(Kh(Eigen::Index(i), Eigen::Index(i)) -
                             limit(window[i], window[i]));
        if (d > sup) sup = d;
        for (size_t j = i + 1; j < m; ++j) {
            double t = Kh(Eigen::Index(i), Eigen::Index(j)) *
                       Kh(Eigen::Index(j), Eigen::Index(i));
            double L = std::fabs(limit(window[i], window[j]));
            double g = t >= 0.0 ? std::fabs(std::sqrt(t) - L) : std::sqrt(-t) + L;
            if (g > sup) sup = g;
        }
    }
    rep.sup_dev = sup;
    return rep;
}

} // namespace c2mm

#endif
