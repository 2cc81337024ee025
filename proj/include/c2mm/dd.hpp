// Double-double scalar: an unevaluated sum hi + lo of two binary64 values
// giving ~106 significand bits.  Error-free transforms (two_sum, two_prod via
// fma) follow Dekker/Knuth; exp/log use argument reduction plus a short Taylor
// tail, accurate to a few ulps which is all the extended bimoment pipeline
// needs.  Operations are branch-light so the optimizer can inline them.
#ifndef C2MM_DD_HPP
#define C2MM_DD_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <iosfwd>
#include <ostream>

namespace c2mm {

struct DDouble {
    double hi = 0.0, lo = 0.0;

    constexpr DDouble() = default;
    constexpr DDouble(double h) : hi(h), lo(0.0) {}
    constexpr DDouble(double h, double l) : hi(h), lo(l) {}
    constexpr DDouble(int v) : hi(double(v)), lo(0.0) {}
    constexpr DDouble(long v) : hi(double(v)), lo(0.0) {}

    explicit operator double() const { return hi; }
};

namespace detail {
inline void two_sum(double a, double b, double& s, double& e) {
    s = a + b;
    double bb = s - a;
    e = (a - (s - bb)) + (b - bb);
}
inline void quick_two_sum(double a, double b, double& s, double& e) {
    s = a + b;
    e = b - (s - a);
}
inline void two_prod(double a, double b, double& p, double& e) {
    p = a * b;
    e = std::fma(a, b, -p);
}
} // namespace detail

inline DDouble operator+(DDouble a, DDouble b) {
    double s1, s2, t1, t2;
    detail::two_sum(a.hi, b.hi, s1, s2);
    detail::two_sum(a.lo, b.lo, t1, t2);
    s2 += t1;
    detail::quick_two_sum(s1, s2, s1, s2);
    s2 += t2;
    detail::quick_two_sum(s1, s2, s1, s2);
    return {s1, s2};
}
inline DDouble operator-(DDouble a) { return {-a.hi, -a.lo}; }
inline DDouble operator-(DDouble a, DDouble b) { return a + (-b); }
inline DDouble operator*(DDouble a, DDouble b) {
    double p1, p2;
    detail::two_prod(a.hi, b.hi, p1, p2);
    p2 += a.hi * b.lo + a.lo * b.hi;
    detail::quick_two_sum(p1, p2, p1, p2);
    return {p1, p2};
}
inline DDouble operator/(DDouble a, DDouble b) {
    double q1 = a.hi / b.hi;
    DDouble r = a - DDouble(q1) * b;
    double q2 = r.hi / b.hi;
    r = r - DDouble(q2) * b;
    double q3 = r.hi / b.hi;
    double s, e;
    detail::quick_two_sum(q1, q2, s, e);
    DDouble out{s, e};
    return out + DDouble(q3);
}

inline DDouble& operator+=(DDouble& a, DDouble b) { a = a + b; return a; }
inline DDouble& operator-=(DDouble& a, DDouble b) { a = a - b; return a; }
inline DDouble& operator*=(DDouble& a, DDouble b) { a = a * b; return a; }
inline DDouble& operator/=(DDouble& a, DDouble b) { a = a / b; return a; }

inline DDouble operator+(DDouble a, double b) { return a + DDouble(b); }
inline DDouble operator+(double a, DDouble b) { return DDouble(a) + b; }
inline DDouble operator-(DDouble a, double b) { return a - DDouble(b); }
inline DDouble operator-(double a, DDouble b) { return DDouble(a) - b; }
inline DDouble operator*(DDouble a, double b) { return a * DDouble(b); }
inline DDouble operator*(double a, DDouble b) { return DDouble(a) * b; }
inline DDouble operator/(DDouble a, double b) { return a / DDouble(b); }
inline DDouble operator/(double a, DDouble b) { return DDouble(a) / b; }

inline bool operator==(DDouble a, DDouble b) { return a.hi == b.hi && a.lo == b.lo; }
inline bool operator!=(DDouble a, DDouble b) { return !(a == b); }
inline bool operator<(DDouble a, DDouble b) {
    return a.hi < b.hi || (a.hi == b.hi && a.lo < b.lo);
}
inline bool operator>(DDouble a, DDouble b) { return b < a; }
inline bool operator<=(DDouble a, DDouble b) { return !(b < a); }
inline bool operator>=(DDouble a, DDouble b) { return !(a < b); }

inline double to_double(DDouble a) { return a.hi; }
inline double to_double(double a) { return a; }

inline DDouble fabs(DDouble a) { return a.hi < 0.0 || (a.hi == 0.0 && a.lo < 0.0) ? -a : a; }
inline DDouble abs(DDouble a) { return fabs(a); }
inline bool isfinite(DDouble a) { return std::isfinite(a.hi); }

inline DDouble ldexp(DDouble a, int n) { return {std::ldexp(a.hi, n), std::ldexp(a.lo, n)}; }

inline DDouble floor(DDouble a) {
    double f = std::floor(a.hi);
    if (f != a.hi) return {f, 0.0};
    double g = std::floor(a.lo);
    double s, e;
    detail::quick_two_sum(f, g, s, e);
    return {s, e};
}

inline DDouble sqrt(DDouble a) {
    if (a.hi == 0.0) return {0.0, 0.0};
    // Karp's method: one Newton step on 1/sqrt in double-double.
    double x = 1.0 / std::sqrt(a.hi);
    double ax = a.hi * x;
    DDouble err = a - DDouble(ax) * DDouble(ax);
    return DDouble(ax) + DDouble(err.hi * (x * 0.5));
}

namespace detail {
inline const DDouble dd_ln2{6.931471805599452862e-01, 2.319046813846299558e-17};
inline const DDouble dd_eps{4.93038065763132e-32}; // 2^-104
}

inline DDouble exp(DDouble a) {
    // exp(a) = 2^m * (e^r)^512 with r = (a - m ln2)/512, |r| small.
    if (a.hi <= -709.0) return {0.0, 0.0};
    if (a.hi >= 709.0) return {std::numeric_limits<double>::infinity(), 0.0};
    double m = std::floor(a.hi / detail::dd_ln2.hi + 0.5);
    DDouble r = (a - detail::dd_ln2 * m) * (1.0 / 512.0);
    // Taylor of e^r - 1
    DDouble p = r * r * 0.5;
    DDouble s = r + p;
    double thresh = 1e-35;
    double fact = 2.0;
    do {
        p = p * r;
        fact += 1.0;
        p = p / fact;
        s = s + p;
    } while (std::fabs(p.hi) > thresh * std::fabs(s.hi) + 1e-300);
    // undo the /512: s <- (1+s)^2 - 1 nine times
    for (int i = 0; i < 9; ++i) s = s * 2.0 + s * s;
    s = s + 1.0;
    return ldexp(s, int(m));
}

inline DDouble log(DDouble a) {
    // Scale into [0.5, 1) first so exp(-x) below stays far from denormals,
    // then Newton on x -> x + m e^{-x} - 1 from the double seed (two steps).
    int e;
    double mh = std::frexp(a.hi, &e);
    (void)mh;
    DDouble m = ldexp(a, -e);
    DDouble x{std::log(m.hi), 0.0};
    for (int i = 0; i < 2; ++i) x = x + m * exp(-x) - 1.0;
    return x + detail::dd_ln2 * double(e);
}

inline DDouble pow(DDouble a, DDouble b) { return exp(b * log(a)); }
inline DDouble pow(DDouble a, double b) { return exp(DDouble(b) * log(a)); }

inline DDouble pow_int(DDouble a, long n) {
    if (n < 0) return 1.0 / pow_int(a, -n);
    DDouble r{1.0, 0.0}, base = a;
    while (n) {
        if (n & 1) r = r * base;
        base = base * base;
        n >>= 1;
    }
    return r;
}

inline DDouble fmin(DDouble a, DDouble b) { return a < b ? a : b; }
inline DDouble fmax(DDouble a, DDouble b) { return a < b ? b : a; }

inline std::ostream& operator<<(std::ostream& os, DDouble a) {
    return os << a.hi << (a.lo >= 0 ? "+" : "") << a.lo;
}

// Uniform scalar queries usable from templates over double | DDouble.
template <class R> struct scalar_info;
template <> struct scalar_info<double> {
    static constexpr double eps = 2.220446049250313e-16;
    static constexpr int digits10 = 16;
};
template <> struct scalar_info<DDouble> {
    static constexpr double eps = 4.93038065763132e-32;
    static constexpr int digits10 = 31;
};

} // namespace c2mm

#endif
