// Weight layer of the chirally coupled two-matrix ensemble: polynomial
// potentials V and W, the Bessel coupling factor tying the two coordinates
// together, the reduced moments h_l obtained by integrating out the second
// coordinate, and the alternative weight system built from them.
//
// The coupling factor is evaluated through the entire function
//   E_mu(w) = sum_k w^k / (k! Gamma(k+mu+1)),   E_mu' = E_{mu+1},
// as f(x) = (tau n)^nu x^nu E_nu((tau n)^2 x).  That form needs no branch
// handling at x = 0 and turns every x-derivative into a shift mu -> mu+1
// under the integral sign, so h_l' and h_l'' come from the same quadrature
// nodes as h_l instead of finite differences.
#ifndef C2MM_MODEL_HPP
#define C2MM_MODEL_HPP

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bessel.hpp"
#include "log_scaled.hpp"
#include "quadrature.hpp"
#include "scalar.hpp"

namespace c2mm {

// Real polynomial, coefficients in ascending degree.
struct Poly {
    std::vector<double> c;

    Poly() = default;
    Poly(std::initializer_list<double> v) : c(v) {}
    explicit Poly(std::vector<double> v) : c(std::move(v)) {}

    int degree() const {
        for (int k = int(c.size()) - 1; k >= 0; --k)
            if (c[size_t(k)] != 0.0) return k;
        return -1;
    }
    double lead() const {
        int d = degree();
        return d < 0 ? 0.0 : c[size_t(d)];
    }
    double coeff(int k) const {
        return (k >= 0 && k < int(c.size())) ? c[size_t(k)] : 0.0;
    }

    template <class T>
    T operator()(T x) const {
        T acc = T(0.0);
        for (size_t k = c.size(); k-- > 0;) acc = acc * x + T(c[k]);
        return acc;
    }

    Poly derivative() const {
        Poly d;
        if (c.size() > 1) {
            d.c.resize(c.size() - 1);
            for (size_t k = 1; k < c.size(); ++k) d.c[k - 1] = double(k) * c[k];
        }
        return d;
    }
};

// Ensemble parameters.  Constant terms of V and W are stripped on
// construction (they only shift the normalization) and kept as offsets so
// raw, unnormalized densities can still be reported on request.
//
// tau = 0 is accepted by the constructor — the Gaussian sampler uses it for
// its decoupled control runs — but every weight-side evaluation requires
// tau > 0 and throws otherwise.
struct ModelSpec {
    double nu = 0.0;
    double tau = 0.0;
    int n = 1;
    Poly V, W;
    double v_offset = 0.0, w_offset = 0.0;
    int r = 0; // deg W - 1

    ModelSpec() = default;
    ModelSpec(double nu_, double tau_, int n_, Poly V_, Poly W_)
        : nu(nu_), tau(tau_), n(n_), V(std::move(V_)), W(std::move(W_)) {
        if (!V.c.empty()) { v_offset = V.c[0]; V.c[0] = 0.0; }
        if (!W.c.empty()) { w_offset = W.c[0]; W.c[0] = 0.0; }
        if (!std::isfinite(nu) || !(nu > -1.0))
            throw std::domain_error("model: nu must be > -1");
        if (!std::isfinite(tau) || tau < 0.0)
            throw std::domain_error("model: tau must be >= 0");
        if (n < 1) throw std::domain_error("model: n must be >= 1");
        if (V.degree() < 1 || V.lead() <= 0.0)
            throw std::domain_error("model: V needs degree >= 1 and a positive leading coefficient");
        if (W.degree() < 1 || W.lead() <= 0.0)
            throw std::domain_error("model: W needs degree >= 1 and a positive leading coefficient");
        if (V.degree() == 1 && W.degree() == 1 && !(tau * tau < V.c[1] * W.c[1]))
            throw std::domain_error("model: linear potentials need tau^2 < c1*c2");
        r = W.degree() - 1;
    }

    double coupling() const { return tau * double(n); } // tau*n
    // j-th coefficient of W' as used by the derivative recurrences:
    // W'(y) = sum_{j=1}^{r+1} wprime_coeff(j) y^{j-1}.
    double wprime_coeff(int j) const { return double(j) * W.coeff(j); }
    // log of the normalization factor removed by stripping the constants.
    double raw_log_shift() const { return -double(n) * (v_offset + w_offset); }
};

inline ModelSpec model_from_json(const nlohmann::json& j) {
    auto need = [&](const char* k) -> const nlohmann::json& {
        auto it = j.find(k);
        if (it == j.end())
            throw std::invalid_argument(std::string("model config: missing field '") + k + "'");
        return *it;
    };
    long long nn = need("n").get<long long>();
    if (nn < 1 || nn > 1000000)
        throw std::invalid_argument("model config: n out of range");
    return ModelSpec(need("nu").get<double>(), need("tau").get<double>(), int(nn),
                     Poly(need("V").get<std::vector<double>>()),
                     Poly(need("W").get<std::vector<double>>()));
}

inline ModelSpec model_from_json_text(const std::string& text) {
    return model_from_json(nlohmann::json::parse(text));
}

namespace detail {

inline bool identical(double a, double b) { return a == b; }
inline bool identical(DDouble a, DDouble b) { return a.hi == b.hi && a.lo == b.lo; }

template <class R> R log_any(R x) {
    if constexpr (std::is_same_v<R, double>) return std::log(x);
    else return log(x);
}

template <class T>
LogScaled<T> ls_widen(const LogScaled<real_of_t<T>>& a) {
    LogScaled<T> out;
    out.mant = T(a.mant);
    out.scale = a.scale;
    return out;
}

// x^p for the scalar kinds the coupling factor supports; principal branch.
template <class T>
LogScaled<T> model_power(T x, double p) {
    if constexpr (std::is_same_v<T, Cdd>) return ls_power_acc(x, p);
    else return ls_power(x, p);
}

} // namespace detail

// d-th derivative (d <= 3) of the coupling factor
//   f(x) = x^{nu/2} I_nu(2 tau n sqrt(x)) = (tau n)^nu x^nu E_nu((tau n)^2 x),
// real and positive on (0,inf); complex x on the principal branch.
// f^{(d)}(x) = (tau n)^nu sum_k C(d,k) nu(nu-1)..(nu-k+1) x^{nu-k} c^{d-k}
//              E_{nu+d-k}(c x),  c = (tau n)^2.
template <class T>
LogScaled<T> coupling_factor(const ModelSpec& s, T x, int d = 0) {
    using R = real_of_t<T>;
    if (!(s.tau > 0.0)) throw std::domain_error("coupling factor needs tau > 0");
    if (d < 0 || d > 3) throw std::domain_error("coupling factor: derivative order 0..3");
    R tn = R(s.tau) * double(s.n);
    R c = tn * tn;
    if (mag(x) == 0.0) {
        if (d > 0) throw std::domain_error("coupling factor: derivatives need x != 0");
        if (s.nu > 0.0) return LogScaled<T>{};
        if (s.nu == 0.0) return LogScaled<T>(T(1.0));
        throw std::domain_error("coupling factor: diverges at x = 0 for nu < 0");
    }
    LogScaled<T> acc{};
    double binom = 1.0, fall = 1.0;
    for (int k = 0; k <= d; ++k) {
        if (k > 0) {
            binom *= double(d - k + 1) / double(k);
            fall *= s.nu - double(k - 1);
        }
        if (binom * fall != 0.0) {
            R cp{1.0};
            for (int j = 0; j < d - k; ++j) cp = cp * c;
            auto term = detail::model_power(x, s.nu - double(k)) *
                        entire_e(s.nu + double(d - k), x * T(c));
            acc += term * T(cp * (binom * fall));
        }
    }
    return acc * detail::ls_widen<T>(ls_pow(tn, R(s.nu)));
}

// Full two-coordinate weight f(x y) e^{-n(V(x)+W(y))} (constants stripped;
// see ModelSpec::raw_log_shift for the removed normalization).
template <class R>
LogScaled<R> ensemble_weight(const ModelSpec& s, R x, R y) {
    if (to_double(x) < 0.0 || to_double(y) < 0.0)
        throw std::domain_error("ensemble weight: x, y must be >= 0");
    return coupling_factor(s, x * y) * ls_exp<R>(-(s.V(x) + s.W(y)) * double(s.n));
}

// Reduced moments h_l(x) = int_0^inf y^l f(x y) e^{-n W(y)} dy together with
// their first dmax x-derivatives, all l = 0..lmax from one node sweep per x.
// Rows are cached by x; the cache is safe for concurrent readers.
template <class R = double>
class WeightTable {
  public:
    WeightTable(ModelSpec spec, int lmax, int dmax = 2, double rel_tol = 0.0)
        : spec_(std::move(spec)), lmax_(lmax), dmax_(dmax) {
        if (!(spec_.tau > 0.0)) throw std::domain_error("weight table needs tau > 0");
        if (lmax_ < 0 || dmax_ < 0 || dmax_ > 3)
            throw std::domain_error("weight table: bad l or d range");
        constexpr bool wide = std::is_same_v<R, DDouble>;
        tol_ = rel_tol > 0.0 ? rel_tol : (wide ? 1e-16 : 1e-12);
        // truncation margin follows the accuracy actually requested, not the
        // scalar type: only near-full dd accuracy needs the deep tail
        extra_drop_ = (wide && tol_ < 1e-13) ? 40.0 : 10.0;
    }

    struct Row {
        R x{};
        int lmax = 0, dmax = 0;
        std::vector<LogScaled<R>> v; // v[l*(dmax+1)+d]

        const LogScaled<R>& at(int l, int d) const {
            if (l < 0 || l > lmax || d < 0 || d > dmax)
                throw std::out_of_range("weight table row: (l,d) outside table");
            return v[size_t(l) * size_t(dmax + 1) + size_t(d)];
        }
    };

    const ModelSpec& spec() const { return spec_; }
    int lmax() const { return lmax_; }
    int dmax() const { return dmax_; }

    std::shared_ptr<const Row> row(R x) const {
        double key = to_double(x);
        {
            std::lock_guard<std::mutex> lk(mu_);
            auto it = cache_.find(key);
            if (it != cache_.end() && detail::identical(it->second->x, x))
                return it->second;
        }
        auto fresh = compute_row(x);
        std::lock_guard<std::mutex> lk(mu_);
        auto& slot = cache_[key];
        if (slot && detail::identical(slot->x, x)) return slot;
        slot = fresh;
        return fresh;
    }

    LogScaled<R> h(int l, R x, int d = 0) const { return row(x)->at(l, d); }

    // Alternative weights: e^{-nV} h_l for l <= r, e^{-nV} x h'_{l-r-1} above.
    LogScaled<R> alt_weight(int l, R x) const {
        int r = spec_.r;
        if (l < 0 || l > 2 * r)
            throw std::out_of_range("alternative weight index outside 0..2r");
        auto ev = ls_exp<R>(-double(spec_.n) * spec_.V(x));
        if (l <= r) return ev * h(l, x, 0);
        return ev * h(l - r - 1, x, 1) * x;
    }

  private:
    std::shared_ptr<const Row> compute_row(R x) const {
        double xd = to_double(x);
        if (!(xd > 0.0)) throw std::domain_error("weight table rows need x > 0");
        const double nu = spec_.nu, nd = double(spec_.n), tnd = spec_.tau * nd;
        const int L = lmax_, D = dmax_;

        // Panel layout and truncation come from the double-precision envelope
        // of the largest power the row needs; the y^nu endpoint drives the
        // substitution/grading choice.
        DecayHint hint;
        const Poly* W = &spec_.W;
        double lcap = double(L + D);
        hint.log_env = [nu, lcap, tnd, nd, xd, W](double y) {
            if (y <= 0.0) return -std::numeric_limits<double>::infinity();
            return (nu + lcap) * std::log(y) + 2.0 * tnd * std::sqrt(xd * y) - nd * (*W)(y);
        };
        hint.singular_exponent = nu;
        QuadratureRule rule = build_quadrature(0.0, std::numeric_limits<double>::infinity(),
                                               tol_, hint, extra_drop_);

        R tn = R(spec_.tau) * nd;
        R c = tn * tn;

        // J[d][l] = int y^{nu+d+l} E_{nu+d}(c x y) e^{-n W(y)} dy, accumulated
        // per panel around the panel's dominant log scale so nothing decodes
        // outside binary64 range.
        std::vector<LogScaled<R>> J(size_t(D + 1) * size_t(L + 1));
        const size_t ord = size_t(rule.order);
        std::vector<R> ys(ord), wq(ord), ly(ord), Wy(ord);
        std::vector<LogScaled<R>> base(ord);
        std::vector<R> acc(size_t(L + 1));
        for (size_t p0 = 0; p0 < rule.size(); p0 += ord) {
            size_t np = std::min(rule.size() - p0, ord);
            for (size_t i = 0; i < np; ++i) {
                ys[i] = detail::dd_cast<R>(rule.nodes[p0 + i]);
                wq[i] = detail::dd_cast<R>(rule.weights[p0 + i]);
                ly[i] = detail::log_any(ys[i]);
                Wy[i] = spec_.W(ys[i]);
            }
            for (int d = 0; d <= D; ++d) {
                double smax = 0.0;
                bool any = false;
                for (size_t i = 0; i < np; ++i) {
                    base[i] = entire_e(nu + double(d), c * x * ys[i]) *
                              ls_exp<R>((R(nu) + double(d)) * ly[i] - R(nd) * Wy[i]);
                    if (base[i].zero()) continue;
                    double sc = to_double(base[i].scale);
                    if (!any || sc > smax) smax = sc;
                    any = true;
                }
                if (!any) continue;
                for (int l = 0; l <= L; ++l) acc[size_t(l)] = R(0.0);
                for (size_t i = 0; i < np; ++i) {
                    if (base[i].zero()) continue;
                    R t = base[i].mant * detail::exp_any(base[i].scale - R(smax)) * wq[i];
                    for (int l = 0; l <= L; ++l) {
                        acc[size_t(l)] += t;
                        t = t * ys[i];
                    }
                }
                for (int l = 0; l <= L; ++l)
                    J[size_t(d) * size_t(L + 1) + size_t(l)] +=
                        LogScaled<R>(acc[size_t(l)], R(smax));
            }
        }

        // h_l^{(d)} = (tau n)^nu sum_k C(d,k) nu^(k falling) x^{nu-k}
        //             c^{d-k} J[d-k][l]
        auto out = std::make_shared<Row>();
        out->x = x;
        out->lmax = L;
        out->dmax = D;
        out->v.resize(size_t(L + 1) * size_t(D + 1));
        LogScaled<R> A = ls_pow(tn, R(nu));
        R lx = detail::log_any(x);
        for (int l = 0; l <= L; ++l) {
            for (int d = 0; d <= D; ++d) {
                LogScaled<R> sum{};
                double binom = 1.0, fall = 1.0;
                for (int k = 0; k <= d; ++k) {
                    if (k > 0) {
                        binom *= double(d - k + 1) / double(k);
                        fall *= nu - double(k - 1);
                    }
                    if (binom * fall == 0.0) continue;
                    R cp{1.0};
                    for (int j = 0; j < d - k; ++j) cp = cp * c;
                    auto term = J[size_t(d - k) * size_t(L + 1) + size_t(l)] *
                                ls_exp<R>((R(nu) - double(k)) * lx);
                    sum += term * (cp * (binom * fall));
                }
                out->v[size_t(l) * size_t(D + 1) + size_t(d)] = A * sum;
            }
        }
        return out;
    }

    ModelSpec spec_;
    int lmax_, dmax_;
    double tol_, extra_drop_;
    mutable std::mutex mu_;
    mutable std::map<double, std::shared_ptr<const Row>> cache_;
};

// One-off reduced moment; builds a throwaway table, so prefer WeightTable
// when more than a few values are needed.
template <class R = double>
LogScaled<R> reduced_moment(const ModelSpec& s, int l, R x, int d = 0) {
    WeightTable<R> t(s, l, std::max(d, 0));
    return t.h(l, x, d);
}

} // namespace c2mm

#endif // C2MM_MODEL_HPP
