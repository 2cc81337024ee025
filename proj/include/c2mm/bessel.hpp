// Modified Bessel functions and relatives, in log-scaled form, over real or
// complex arguments with working precision double or DDouble.
//
// Accuracy design: K_nu below the asymptotic range is formed from
// (pi/2)(I_{-nu} - I_nu)/sin(nu pi), where the difference cancels like
// e^{2|u|}; every ingredient (series terms, Gamma, sin(nu pi), powers) is
// therefore computed in double-double regardless of the caller's precision,
// and only demoted at the end.  Integer orders route through the log/psi
// limit series, again in double-double.  Asymptotic branches carry the
// exponential factor in the log-scale slot so nothing overflows.
#ifndef C2MM_BESSEL_HPP
#define C2MM_BESSEL_HPP

#include <cmath>
#include <stdexcept>
#include "log_scaled.hpp"

namespace c2mm {
namespace detail {

inline const DDouble dd_pi{3.14159265358979312e+00, 1.22464679914735321e-16};
inline const DDouble dd_euler{5.77215664901532866e-01, -4.94291515243064487e-18};
inline const DDouble dd_two_over_sqrt_pi{1.1283791670955126, 1.533545961316588e-17};

// sin(pi x), cos(pi x) with the range reduction done on the exact dd lattice.
inline DDouble dd_sinpi(DDouble x) {
    DDouble n = floor(x + DDouble(0.5));
    DDouble r = x - n; // in [-1/2, 1/2]
    bool neg = std::fmod(n.hi, 2.0) != 0.0;
    DDouble t = dd_pi * r, t2 = t * t, term = t, s = t;
    for (int k = 1; k < 24; ++k) {
        term = term * t2 / double((2 * k) * (2 * k + 1));
        s = (k & 1) ? s - term : s + term;
        if (std::fabs(term.hi) < 1e-35 * std::fabs(s.hi) + 1e-320) break;
    }
    return neg ? -s : s;
}
inline DDouble dd_cospi(DDouble x) { return dd_sinpi(DDouble(0.5) - x); }
inline DDouble dd_sin(DDouble x) { return dd_sinpi(x / dd_pi); }
inline DDouble dd_cos(DDouble x) { return dd_cospi(x / dd_pi); }

// atan2 lifted to dd: double seed plus two Newton corrections through dd
// sin/cos (the correction divisor is |(x,y)| up to O(err^2)).
inline DDouble dd_atan2(DDouble y, DDouble x) {
    DDouble th{std::atan2(y.hi, x.hi)};
    for (int i = 0; i < 2; ++i) {
        DDouble s = dd_sin(th), c = dd_cos(th);
        th = th + (y * c - x * s) / (x * c + y * s);
    }
    return th;
}

// log Gamma(y) for y >= 30 by Stirling's series; B_{2j} terms down to ~1e-36.
inline DDouble dd_log_gamma_big(DDouble y) {
    static const double bnum[] = {1, -1, 1, -1, 5, -691, 7, -3617, 43867,
                                  -174611, 854513, -236364091, 8553103,
                                  -23749461029.0, 8615841276005.0};
    static const double bden[] = {6, 30, 42, 30, 66, 2730, 6, 510, 798,
                                  330, 138, 2730, 6, 870, 14322};
    DDouble half_l2pi{0.9189385332046728, -3.8782941580672414e-17}; // log(2 pi)/2
    DDouble acc = (y - DDouble(0.5)) * log(y) - y + half_l2pi;
    DDouble y2 = y * y, ypow = y;
    for (int j = 1; j <= 15; ++j) {
        DDouble c = DDouble(bnum[j - 1]) / (DDouble(bden[j - 1]) * double(2 * j) * double(2 * j - 1));
        acc += c / ypow;
        ypow = ypow * y2;
    }
    return acc;
}

// Gamma(x) for real x (poles at non-positive integers give inf through the
// recurrence divisor, which is the honest answer).
inline DDouble dd_gamma(DDouble x) {
    DDouble shift{1.0};
    while (x.hi < 30.0) {
        shift = shift * x;
        x = x + 1.0;
    }
    return exp(dd_log_gamma_big(x)) / shift;
}

// 1/Gamma(x) memoized over the handful of orders a sweep actually touches.
// Takes the argument in dd: shifts like nu+1 must be formed by exact dd
// addition, since a double-rounded argument costs ~1e-17 relative in Gamma
// and the I_{-nu} - I_nu cancellation amplifies that by e^{2u}.
inline DDouble dd_rgamma_cached(DDouble x) {
    struct Slot { DDouble x; DDouble v; };
    thread_local Slot slots[8] = {};
    thread_local int pos = 0;
    for (const auto& s : slots)
        if (s.x.hi == x.hi && s.x.lo == x.lo) return s.v;
    DDouble v = DDouble(1.0) / dd_gamma(x);
    slots[pos] = {x, v};
    pos = (pos + 1) & 7;
    return v;
}

template <class T> struct promoted { using type = DDouble; };
template <class R> struct promoted<Cplx<R>> { using type = Cplx<DDouble>; };
template <class T> using promoted_t = typename promoted<T>::type;

inline DDouble to_promoted(double u) { return DDouble(u); }
inline DDouble to_promoted(DDouble u) { return u; }
inline Cdd to_promoted(Cplx<double> u) { return Cdd(DDouble(u.re), DDouble(u.im)); }
inline Cdd to_promoted(Cdd u) { return u; }

// Demote a promoted log-scaled value to the caller's precision; the dd scale
// residue is folded into the mantissa first so nothing is lost.
template <class T, class P>
LogScaled<T> demote_ls(LogScaled<P> in) {
    if constexpr (std::is_same_v<T, P>) {
        return in;
    } else {
        using R = real_of_t<T>;
        if (in.zero()) return LogScaled<T>{};
        in.mant = in.mant * P(exp(DDouble(in.scale.lo)));
        LogScaled<T> out;
        if constexpr (std::is_same_v<P, DDouble>) out.mant = T(in.mant.hi);
        else out.mant = T(R(in.mant.re.hi), R(in.mant.im.hi));
        out.scale = R(in.scale.hi);
        out.normalize();
        return out;
    }
}

// x^p at full dd accuracy (principal branch).  Real x must be >= 0.
inline LogScaled<DDouble> ls_power_acc(DDouble x, double p) {
    if (x.hi == 0.0) return p == 0.0 ? LogScaled<DDouble>(DDouble(1.0)) : LogScaled<DDouble>{};
    if (x.hi < 0.0) throw std::domain_error("ls_power_acc: negative real base");
    return ls_exp<DDouble>(DDouble(p) * log(x));
}
inline LogScaled<Cdd> ls_power_acc(Cdd x, double p) {
    if (mag(x) == 0.0) return p == 0.0 ? LogScaled<Cdd>(Cdd(DDouble(1.0))) : LogScaled<Cdd>{};
    DDouble th = dd_atan2(x.im, x.re) * DDouble(p);
    LogScaled<Cdd> r;
    r.mant = Cdd(dd_cos(th), dd_sin(th));
    r.scale = DDouble(p) * log(abs(x));
    r.normalize();
    return r;
}

// x^p at working precision (asymptotic branches; complex phase in double).
template <class T>
LogScaled<T> ls_power(T x, double p) {
    using R = real_of_t<T>;
    if constexpr (std::is_same_v<T, R>) {
        return ls_pow(x, R(p));
    } else {
        if (mag(x) == 0.0) return p == 0.0 ? LogScaled<T>(T(R(1.0))) : LogScaled<T>{};
        double th = std::atan2(to_double(x.im), to_double(x.re)) * p;
        LogScaled<T> r;
        r.mant = T(R(std::cos(th)), R(std::sin(th)));
        r.scale = R(p) * log(abs(x));
        r.normalize();
        return r;
    }
}

// e^x as a log-scaled value: Re x goes to the scale slot, the phase to the
// mantissa.
template <class T>
LogScaled<T> ls_exp_of(T x) {
    using R = real_of_t<T>;
    if constexpr (std::is_same_v<T, R>) {
        return ls_exp<T>(x);
    } else {
        double th = to_double(x.im);
        LogScaled<T> r;
        r.mant = T(R(std::cos(th)), R(std::sin(th)));
        r.scale = x.re;
        r.normalize();
        return r;
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// I_nu(u).  Real u must be >= 0; complex u anywhere off (-inf, 0).

template <class T>
LogScaled<T> bessel_i_scaled(double nu, T u) {
    using R = real_of_t<T>;
    constexpr bool cplx = !std::is_same_v<T, R>;
    if (nu < 0.0 && std::fabs(nu - std::nearbyint(nu)) < 1e-13)
        return bessel_i_scaled(-nu, u); // I_{-m} = I_m
    double au = mag(u);
    if (au == 0.0) {
        if (nu == 0.0) return LogScaled<T>(T(1.0));
        if (nu > 0.0) return LogScaled<T>{};
        throw std::domain_error("bessel_i_scaled: u = 0 with nu < 0");
    }
    if constexpr (!cplx) {
        if (to_double(u) < 0.0) throw std::domain_error("bessel_i_scaled: negative real u");
    }
    if (au < 40.0) {
        // ascending series, fully in dd: (u/2)^nu / Gamma(nu+1) * sum_k q^k / (k! (nu+1)_k)
        using P = detail::promoted_t<T>;
        P up = detail::to_promoted(u);
        P q = up * up * P(0.25);
        P term{1.0}, sum{1.0};
        for (int k = 0; k < 400; ++k) {
            DDouble den = DDouble(double(k + 1)) * (DDouble(double(k + 1)) + DDouble(nu));
            term = term * q * (DDouble(1.0) / den);
            sum += term;
            if (mag(term) < 1e-35 * mag(sum) + 1e-320) break;
        }
        auto res = detail::ls_power_acc(up * P(0.5), nu) *
                   LogScaled<P>(sum * P(detail::dd_rgamma_cached(DDouble(nu) + 1.0)));
        return detail::demote_ls<T>(res);
    }
    // compound asymptotics (both exponentials), assembled in log scale
    T sp{1.0}, sm{1.0}, tp{1.0}, tm{1.0};
    R nu2 = R(4.0) * R(nu) * R(nu);
    double prev = 1e300;
    for (int k = 1; k < 80; ++k) {
        R num = nu2 - R(2.0 * k - 1.0) * R(2.0 * k - 1.0);
        T f = T(num) / (u * T(R(8.0 * k)));
        tp = tp * (-f);
        tm = tm * f;
        double m = mag(tm);
        if (m > prev) break; // past the smallest term
        prev = m;
        sp += tp;
        sm += tm;
        if (m < 1e-35 * mag(sm)) break;
    }
    T phase;
    if constexpr (cplx) {
        double sgn = to_double(u.im) >= 0.0 ? 1.0 : -1.0; // DLMF 10.40.5 sign
        phase = T(R(std::cos((nu + 0.5) * M_PI)), R(sgn * std::sin((nu + 0.5) * M_PI)));
    } else {
        phase = T(R(std::cos((nu + 0.5) * M_PI)));
    }
    auto pref = detail::ls_power(u * T(R(2.0 * M_PI)), -0.5);
    auto total = detail::ls_exp_of(u) * LogScaled<T>(sp) +
                 detail::ls_exp_of(-u) * (LogScaled<T>(sm) * phase);
    return pref * total;
}

// ---------------------------------------------------------------------------
// K_nu(u).

namespace detail {

// integer order, |u| < 16: DLMF 10.31.2 in three log-scaled groups.
template <class T>
LogScaled<T> bessel_k_integer_series(int m, T u) {
    using P = promoted_t<T>;
    P up = to_promoted(u);
    P half_u = up * P(0.5);
    P q = half_u * half_u;
    P logu2;
    if constexpr (std::is_same_v<P, DDouble>) logu2 = log(half_u);
    else logu2 = P(log(abs(half_u)), dd_atan2(half_u.im, half_u.re));

    P fin{0.0};
    if (m > 0) {
        DDouble top{1.0};
        for (int i = 1; i <= m - 1; ++i) top = top * double(i); // (m-1)!
        DDouble kfact{1.0};
        P qk{1.0};
        for (int k = 0; k <= m - 1; ++k) {
            if (k > 0) {
                kfact = kfact * double(k);
                top = top / double(m - k);
                qk = qk * (-q);
            }
            fin += qk * (top / kfact);
        }
        fin = fin * P(0.5);
    }
    P psum{0.0};
    {
        DDouble h1{0.0}, h2{0.0};
        for (int i = 1; i <= m; ++i) h2 = h2 + DDouble(1.0) / double(i); // H_m
        DDouble kf{1.0}, mkf{1.0};
        for (int i = 1; i <= m; ++i) mkf = mkf * double(i); // m!
        P term{1.0};
        for (int k = 0; k < 300; ++k) {
            if (k > 0) {
                kf = kf * double(k);
                mkf = mkf * double(m + k);
                term = term * q;
                h1 = h1 + DDouble(1.0) / double(k);
                h2 = h2 + DDouble(1.0) / double(m + k);
            }
            P piece = term * ((h1 + h2 - DDouble(2.0) * dd_euler) / (kf * mkf));
            psum += piece;
            if (k > 2 && mag(piece) < 1e-36 * mag(psum) + 1e-320) break;
        }
        psum = psum * P(0.5);
    }
    auto im = bessel_i_scaled(double(m), up);
    double sgn = (m % 2 == 0) ? 1.0 : -1.0;
    auto t1 = ls_power_acc(half_u, -double(m)) * LogScaled<P>(fin);
    auto t2 = im * LogScaled<P>(logu2 * P(DDouble(-sgn)));
    auto t3 = ls_power_acc(half_u, double(m)) * LogScaled<P>(psum * P(DDouble(sgn)));
    return demote_ls<T>(t1 + t2 + t3);
}

} // namespace detail

template <class T>
LogScaled<T> bessel_k_scaled(double nu, T u) {
    using R = real_of_t<T>;
    nu = std::fabs(nu); // K_{-nu} = K_nu
    double au = mag(u);
    if (au == 0.0) throw std::domain_error("bessel_k_scaled: u = 0");
    if constexpr (std::is_same_v<T, R>) {
        if (to_double(u) < 0.0) throw std::domain_error("bessel_k_scaled: negative real u");
    }
    if (au >= 16.0) {
        // sqrt(pi/2u) e^{-u} sum_k a_k(nu)/u^k; truncation floor ~ e^{-2|u|}
        T s{1.0}, t{1.0};
        R nu2 = R(4.0) * R(nu) * R(nu);
        double prev = 1e300;
        for (int k = 0; k < 80; ++k) {
            R num = nu2 - R(2.0 * k + 1.0) * R(2.0 * k + 1.0);
            t = t * T(num) / (u * T(R(8.0 * (k + 1.0))));
            double m = mag(t);
            if (m > prev) break;
            prev = m;
            s += t;
            if (m < 1e-35 * mag(s)) break;
        }
        auto pref = detail::ls_power(u * T(R(2.0 / M_PI)), -0.5);
        return pref * detail::ls_exp_of(-u) * LogScaled<T>(s);
    }
    double mr = std::nearbyint(nu);
    if (std::fabs(nu - mr) < 5e-4) // integer-limit window
        return detail::bessel_k_integer_series<T>(int(mr), u);
    using P = detail::promoted_t<T>;
    P up = detail::to_promoted(u);
    auto diff = (bessel_i_scaled(-nu, up) - bessel_i_scaled(nu, up)) *
                LogScaled<P>(P(detail::dd_pi * 0.5 / detail::dd_sinpi(DDouble(nu))));
    return detail::demote_ls<T>(diff);
}

// ---------------------------------------------------------------------------
// E_mu(w) = sum_k w^k / (k! Gamma(k+mu+1)) = I_mu(2 sqrt w) / w^{mu/2},
// entire in w; the core of the xy-dependent weight factor and its x-ladders.

template <class T>
LogScaled<T> entire_e(double mu, T w) {
    using R = real_of_t<T>;
    constexpr bool cplx = !std::is_same_v<T, R>;
    double aw = mag(w);
    if (aw < 400.0) {
        using P = detail::promoted_t<T>;
        P wp = detail::to_promoted(w);
        P term{1.0}, sum{1.0};
        for (int k = 0; k < 500; ++k) {
            DDouble den = DDouble(double(k + 1)) * (DDouble(double(k + 1)) + DDouble(mu));
            term = term * wp * (DDouble(1.0) / den);
            sum += term;
            if (mag(term) < 1e-35 * mag(sum) + 1e-320) break;
        }
        auto res = LogScaled<P>(sum * P(detail::dd_rgamma_cached(DDouble(mu) + 1.0)));
        return detail::demote_ls<T>(res);
    }
    if constexpr (!cplx) {
        if (to_double(w) < 0.0) {
            // far out on the oscillatory side: complex route, result is real
            auto z = entire_e(mu, Cplx<R>(w, R(0.0)));
            LogScaled<T> out;
            out.mant = z.mant.re;
            out.scale = z.scale;
            out.normalize();
            return out;
        }
        auto iv = bessel_i_scaled(mu, R(2.0) * sqrt(w));
        return iv * ls_pow(w, R(-0.5 * mu));
    } else {
        std::complex<double> sw = std::sqrt(to_std(w)); // principal root
        T root = from_std<R>(sw);
        if constexpr (std::is_same_v<R, DDouble>)
            root = (root + w / root) * T(R(0.5)); // one Newton lift to dd
        auto iv = bessel_i_scaled(mu, root * T(R(2.0)));
        return iv * detail::ls_power(w, -0.5 * mu);
    }
}

// ---------------------------------------------------------------------------
// J_nu for the hard-edge reference kernel (real argument, series range).

inline double bessel_j(double nu, double x) {
    if (nu < 0.0 && std::fabs(nu - std::nearbyint(nu)) < 1e-13) {
        int m = int(-std::nearbyint(nu));
        return (m % 2 ? -1.0 : 1.0) * bessel_j(double(m), x);
    }
    if (x == 0.0) {
        if (nu == 0.0) return 1.0;
        return nu > 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    if (x > 60.0) throw std::domain_error("bessel_j: series range exceeded");
    DDouble q = DDouble(x) * DDouble(x) * 0.25;
    DDouble term{1.0}, sum{1.0};
    for (int k = 0; k < 400; ++k) {
        DDouble den = DDouble(double(k + 1)) * (DDouble(double(k + 1)) + DDouble(nu));
        term = -term * q / den;
        sum += term;
        if (std::fabs(term.hi) < 1e-34 * std::fabs(sum.hi) + 1e-320) break;
    }
    DDouble pref = exp(DDouble(nu) * log(DDouble(0.5 * x))) * detail::dd_rgamma_cached(DDouble(nu) + 1.0);
    return to_double(pref * sum);
}

inline double bessel_j_prime(double nu, double x) {
    if (x == 0.0) {
        if (nu == 0.0) return 0.0; // J_0' = -J_1
        if (nu == 1.0) return 0.5;
        return nu < 1.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return 0.5 * (bessel_j(nu - 1.0, x) - bessel_j(nu + 1.0, x));
}

// ---------------------------------------------------------------------------
// Airy Ai and Ai' from the Maclaurin pair; covers the soft-edge window.

inline void airy_ai_pair(double x, double& ai, double& aip) {
    if (std::fabs(x) > 9.0) throw std::domain_error("airy_ai_pair: window exceeded");
    const DDouble c1{0.3550280538878172, 2.05233632436212e-17};   //  Ai(0)
    const DDouble c2{0.2588194037928068, -2.522243111610832e-17}; // -Ai'(0)
    if (x == 0.0) {
        ai = to_double(c1);
        aip = -to_double(c2);
        return;
    }
    DDouble x3 = DDouble(x) * DDouble(x) * DDouble(x);
    DDouble f{1.0}, fp{0.0}, tf{1.0};
    DDouble g{x}, gp{1.0}, tg{x};
    for (int k = 0; k < 80; ++k) {
        tf = tf * x3 / double((3 * k + 2) * (3 * k + 3));
        f += tf;
        fp += tf * double(3 * (k + 1)) / x;
        tg = tg * x3 / double((3 * k + 3) * (3 * k + 4));
        g += tg;
        gp += tg * double(3 * (k + 1) + 1) / x;
        if (std::fabs(tf.hi) < 1e-34 * std::fabs(f.hi) + 1e-320 &&
            std::fabs(tg.hi) < 1e-34 * std::fabs(g.hi) + 1e-320) break;
    }
    ai = to_double(c1 * f - c2 * g);
    aip = to_double(c1 * fp - c2 * gp);
}

// ---------------------------------------------------------------------------
// erfc_scaled(z) = e^{z^2} erfc(z).  Series in dd for |z| <= 4 (the 1 - erf
// cancellation costs at most ~e^{32} of the dd headroom), Laplace continued
// fraction for larger |z| in the right half plane, reflection on the left.

inline LogScaled<Cplx<double>> erfc_scaled(Cplx<double> z) {
    using C = Cplx<double>;
    double az = mag(z);
    if (az <= 4.0) {
        Cdd zd{DDouble(z.re), DDouble(z.im)};
        Cdd z2 = zd * zd;
        Cdd t = zd, s = zd;
        for (int k = 1; k < 120; ++k) {
            t = t * z2 * (DDouble(-1.0) / DDouble(double(k)));
            s += t * (DDouble(1.0) / DDouble(2.0 * k + 1.0));
            if (mag(t) < 1e-34 * (mag(s) + 1.0)) break;
        }
        Cdd erfc = Cdd(DDouble(1.0)) - s * detail::dd_two_over_sqrt_pi;
        LogScaled<Cdd> ez2;
        ez2.mant = Cdd(DDouble(std::cos(to_double(z2.im))), DDouble(std::sin(to_double(z2.im))));
        ez2.scale = z2.re;
        ez2.normalize();
        return detail::demote_ls<C>(ez2 * LogScaled<Cdd>(erfc));
    }
    if (z.re >= 0.0) {
        C acc{0.0, 0.0};
        for (int k = 60; k >= 1; --k) acc = C(0.5 * k) / (z + acc);
        return LogScaled<C>(C(0.5641895835477563) / (z + acc)); // 1/sqrt(pi)
    }
    C m{-z.re, -z.im};
    auto tail = erfc_scaled(m);
    C z2 = z * z;
    LogScaled<C> ez2;
    ez2.mant = C(std::cos(z2.im), std::sin(z2.im));
    ez2.scale = z2.re;
    ez2.normalize();
    return ez2 * LogScaled<C>(C(2.0)) - tail; // erfc(z) = 2 - erfc(-z)
}

} // namespace c2mm

#endif
