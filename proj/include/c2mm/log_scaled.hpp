// Log-scaled number: value = mantissa * exp(log_scale) with the mantissa kept
// in [1,e) by modulus (0 stays 0).  Keeps products/sums of Laplace-type
// integrands representable far beyond binary64 range; log_scale carries the
// same precision as the mantissa's real type so no accuracy is lost when
// scales are folded back in.
#ifndef C2MM_LOG_SCALED_HPP
#define C2MM_LOG_SCALED_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include "scalar.hpp"

namespace c2mm {

template <class T>
struct LogScaled {
    using R = real_of_t<T>;
    T mant{};
    R scale{};

    LogScaled() = default;
    LogScaled(T m, R s) : mant(m), scale(s) { normalize(); }
    explicit LogScaled(T m) : mant(m), scale(R(0)) { normalize(); }
    explicit LogScaled(double m) requires(!std::is_same_v<T, double>)
        : mant(T(m)), scale(R(0)) { normalize(); }

    void normalize() {
        double a = mag_of(mant);
        if (a == 0.0 || !std::isfinite(a)) { scale = R(0); return; }
        if (a >= 1.0 && a < 2.718281828459045) return;
        R la = log(abs_of(mant));
        R sh = floor(la);
        mant = mant * T(exp(-sh));
        scale += sh;
    }

    bool zero() const { return mag_of(mant) == 0.0; }
    // log of |value|; -inf for zero.
    double log_abs() const {
        if (zero()) return -std::numeric_limits<double>::infinity();
        return std::log(mag_of(mant)) + to_double(scale);
    }
    // decode, clamping to huge/0 on overflow rather than producing inf*0.
    T decode() const {
        double s = to_double(scale);
        if (s > 708.0) return mant * T(std::exp(708.0)); // caller should not decode these
        if (s < -745.0) return T(0.0);
        return mant * T(exp(scale));
    }

private:
    static double mag_of(const T& v) { return mag(v); }
    static R abs_of(const T& v) {
        if constexpr (std::is_same_v<T, R>) return fabs(v);
        else return abs(v);
    }
};

template <class T>
LogScaled<T> operator*(LogScaled<T> a, LogScaled<T> b) {
    if (a.zero() || b.zero()) return LogScaled<T>{};
    return {a.mant * b.mant, a.scale + b.scale};
}
template <class T>
LogScaled<T> operator/(LogScaled<T> a, LogScaled<T> b) {
    if (a.zero()) return LogScaled<T>{};
    if (b.zero()) throw std::domain_error("log_scaled: division by zero");
    return {a.mant / b.mant, a.scale - b.scale};
}
template <class T>
LogScaled<T> operator+(LogScaled<T> a, LogScaled<T> b) {
    if (a.zero()) return b;
    if (b.zero()) return a;
    double da = to_double(a.scale), db = to_double(b.scale);
    if (da < db) { auto t = a; a = b; b = t; }
    auto d = b.scale - a.scale; // <= 0
    if (to_double(d) < -745.0) return a;
    using R = real_of_t<T>;
    return {a.mant + b.mant * T(exp(R(d))), a.scale};
}
template <class T>
LogScaled<T> operator-(LogScaled<T> a) { return {-a.mant, a.scale}; }
template <class T>
LogScaled<T> operator-(LogScaled<T> a, LogScaled<T> b) { return a + (-b); }
template <class T>
LogScaled<T> operator*(LogScaled<T> a, T s) { return a * LogScaled<T>(s); }
template <class T>
LogScaled<T>& operator+=(LogScaled<T>& a, LogScaled<T> b) { a = a + b; return a; }
template <class T>
LogScaled<T>& operator*=(LogScaled<T>& a, LogScaled<T> b) { a = a * b; return a; }

// value = exp(s) as a log-scaled number, exact in the scale slot.
template <class T>
LogScaled<T> ls_exp(real_of_t<T> s) {
    LogScaled<T> r;
    r.mant = T(1.0);
    r.scale = s;
    return r;
}

// x^p for positive x via log, keeping range in the scale.
template <class R>
LogScaled<R> ls_pow(R x, R p) {
    if (to_double(x) == 0.0) return to_double(p) == 0.0 ? LogScaled<R>(R(1)) : LogScaled<R>{};
    return ls_exp<R>(p * log(x));
}

template <class T>
double rel_diff(const LogScaled<T>& a, const LogScaled<T>& b) {
    if (a.zero() && b.zero()) return 0.0;
    auto d = a - b;
    double s = std::max(a.log_abs(), b.log_abs());
    return std::exp(d.log_abs() - s);
}

} // namespace c2mm

#endif
