// Quad-double scalar: an unevaluated sum of four binary64 components giving
// ~212 significand bits.  Same construction as the double-double layer one
// step further (Hida/Li/Bailey): error-free two_sum/two_prod ladders feeding
// a branchy renormalization that restores the non-overlap invariant.  The
// additive and multiplicative ladders are the "sloppy" variants, whose error
// is a few units of 2^-212 relative to the operand magnitudes -- all the
// value-table pipeline needs, where cancellation depth is the budget and
// absolute-style bounds are what accumulate anyway.  exp/log mirror the dd
// versions with a deeper argument reduction; ln 2 is built at static-init
// time from the atanh(1/3) series rather than trusting a transcribed literal.
#ifndef C2MM_QD_HPP
#define C2MM_QD_HPP

#include <cmath>
#include <limits>
#include <iosfwd>
#include <ostream>

#include "dd.hpp"

namespace c2mm {

struct QDouble {
    double x[4] = {0.0, 0.0, 0.0, 0.0};

    constexpr QDouble() = default;
    constexpr QDouble(double a) : x{a, 0.0, 0.0, 0.0} {}
    constexpr QDouble(double a, double b, double c, double d) : x{a, b, c, d} {}
    constexpr QDouble(int v) : x{double(v), 0.0, 0.0, 0.0} {}
    constexpr QDouble(long v) : x{double(v), 0.0, 0.0, 0.0} {}
    constexpr QDouble(DDouble v) : x{v.hi, v.lo, 0.0, 0.0} {}

    explicit operator double() const { return x[0]; }
};

namespace detail {

// two_sum / quick_two_sum / two_prod live in dd.hpp; value-returning forms
// keep the ladders below readable.
inline double qts(double a, double b, double& e) {
    double s;
    quick_two_sum(a, b, s, e);
    return s;
}
inline double ts(double a, double b, double& e) {
    double s;
    two_sum(a, b, s, e);
    return s;
}
inline double tp(double a, double b, double& e) {
    double p;
    two_prod(a, b, p, e);
    return p;
}
inline void three_sum(double& a, double& b, double& c) {
    double t1, t2, t3;
    t1 = ts(a, b, t2);
    a = ts(c, t1, t3);
    b = ts(t2, t3, c);
}
inline void three_sum2(double& a, double& b, double c) {
    double t1, t2, t3;
    t1 = ts(a, b, t2);
    a = ts(c, t1, t3);
    b = t2 + t3;
}

// five components, roughly decreasing magnitude, down to four normalized.
// The sweep and gather use the unconditional two_sum (not quick_two_sum):
// the ladder outputs are only approximately ordered and the branchless
// precondition |a| >= |b| is not worth proving case by case.
inline QDouble qd_renorm(double c0, double c1, double c2, double c3, double c4) {
    if (std::isinf(c0)) return {c0, 0.0, 0.0, 0.0};
    double s0;
    s0 = ts(c3, c4, c4);
    s0 = ts(c2, s0, c3);
    s0 = ts(c1, s0, c2);
    c0 = ts(c0, s0, c1);
    double r0, r1 = 0.0, r2 = 0.0, r3 = 0.0;
    double t;
    r0 = ts(c0, c1, t);
    double* dst[3] = {&r1, &r2, &r3};
    int k = 0;
    double rem[3] = {c2, c3, c4};
    double cur = t;
    for (int i = 0; i < 3 && k < 3; ++i) {
        if (cur != 0.0) {
            double s = ts(cur, rem[i], t);
            if (s != 0.0) { *dst[k] = s; ++k; }
            cur = t;
        } else {
            cur = rem[i];
        }
    }
    if (k < 3 && cur != 0.0) *dst[k] = cur;
    return {r0, r1, r2, r3};
}

} // namespace detail

inline QDouble operator-(QDouble a) { return {-a.x[0], -a.x[1], -a.x[2], -a.x[3]}; }

inline QDouble operator+(QDouble a, double b) {
    double e;
    double s0 = detail::ts(a.x[0], b, e);
    double s1 = detail::ts(a.x[1], e, e);
    double s2 = detail::ts(a.x[2], e, e);
    double s3 = detail::ts(a.x[3], e, e);
    return detail::qd_renorm(s0, s1, s2, s3, e);
}
inline QDouble operator+(double a, QDouble b) { return b + a; }

inline QDouble operator+(QDouble a, QDouble b) {
    double t0, t1, t2, t3;
    double s0 = detail::ts(a.x[0], b.x[0], t0);
    double s1 = detail::ts(a.x[1], b.x[1], t1);
    double s2 = detail::ts(a.x[2], b.x[2], t2);
    double s3 = detail::ts(a.x[3], b.x[3], t3);
    s1 = detail::ts(s1, t0, t0);
    detail::three_sum(s2, t0, t1);
    detail::three_sum2(s3, t0, t2);
    t0 = t0 + t1 + t3;
    return detail::qd_renorm(s0, s1, s2, s3, t0);
}

inline QDouble operator-(QDouble a, QDouble b) { return a + (-b); }
inline QDouble operator-(QDouble a, double b) { return a + (-b); }
inline QDouble operator-(double a, QDouble b) { return a + (-b); }

inline QDouble operator*(QDouble a, double b) {
    double q0, q1, q2;
    double p0 = detail::tp(a.x[0], b, q0);
    double p1 = detail::tp(a.x[1], b, q1);
    double p2 = detail::tp(a.x[2], b, q2);
    double p3 = a.x[3] * b;
    double e1, e2;
    double s1 = detail::ts(p1, q0, e1);
    double s2 = detail::ts(p2, q1, e2);
    s2 = detail::ts(s2, e1, e1);
    double s3 = p3 + q2 + e1 + e2;
    return detail::qd_renorm(p0, s1, s2, s3, 0.0);
}
inline QDouble operator*(double a, QDouble b) { return b * a; }

inline QDouble operator*(QDouble a, QDouble b) {
    double q0, q1, q2, q3, q4, q5;
    double p0 = detail::tp(a.x[0], b.x[0], q0);
    double p1 = detail::tp(a.x[0], b.x[1], q1);
    double p2 = detail::tp(a.x[1], b.x[0], q2);
    double p3 = detail::tp(a.x[0], b.x[2], q3);
    double p4 = detail::tp(a.x[1], b.x[1], q4);
    double p5 = detail::tp(a.x[2], b.x[0], q5);
    detail::three_sum(p1, p2, q0);
    detail::three_sum(p2, q1, q2);
    detail::three_sum(p3, p4, p5);
    double t0, t1;
    double s0 = detail::ts(p2, p3, t0);
    double s1 = detail::ts(q1, p4, t1);
    double s2 = q2 + p5;
    s1 = detail::ts(s1, t0, t0);
    s2 += (t0 + t1);
    s1 += a.x[0] * b.x[3] + a.x[1] * b.x[2] + a.x[2] * b.x[1] + a.x[3] * b.x[0] +
          q0 + q3 + q4 + q5;
    return detail::qd_renorm(p0, p1, s0, s1, s2);
}

inline QDouble operator/(QDouble a, QDouble b) {
    // long division: peel one double quotient digit per round
    double q0 = a.x[0] / b.x[0];
    QDouble r = a - b * q0;
    double q1 = r.x[0] / b.x[0];
    r = r - b * q1;
    double q2 = r.x[0] / b.x[0];
    r = r - b * q2;
    double q3 = r.x[0] / b.x[0];
    r = r - b * q3;
    double q4 = r.x[0] / b.x[0];
    return detail::qd_renorm(q0, q1, q2, q3, q4);
}
inline QDouble operator/(QDouble a, double b) { return a / QDouble(b); }
inline QDouble operator/(double a, QDouble b) { return QDouble(a) / b; }

inline QDouble& operator+=(QDouble& a, QDouble b) { a = a + b; return a; }
inline QDouble& operator-=(QDouble& a, QDouble b) { a = a - b; return a; }
inline QDouble& operator*=(QDouble& a, QDouble b) { a = a * b; return a; }
inline QDouble& operator/=(QDouble& a, QDouble b) { a = a / b; return a; }

inline bool operator==(QDouble a, QDouble b) {
    return a.x[0] == b.x[0] && a.x[1] == b.x[1] && a.x[2] == b.x[2] && a.x[3] == b.x[3];
}
inline bool operator!=(QDouble a, QDouble b) { return !(a == b); }
inline bool operator<(QDouble a, QDouble b) {
    // components are normalized (non-overlapping, decreasing), so the
    // lexicographic order is the value order
    if (a.x[0] != b.x[0]) return a.x[0] < b.x[0];
    if (a.x[1] != b.x[1]) return a.x[1] < b.x[1];
    if (a.x[2] != b.x[2]) return a.x[2] < b.x[2];
    return a.x[3] < b.x[3];
}
inline bool operator>(QDouble a, QDouble b) { return b < a; }
inline bool operator<=(QDouble a, QDouble b) { return !(b < a); }
inline bool operator>=(QDouble a, QDouble b) { return !(a < b); }

inline double to_double(QDouble a) { return a.x[0]; }

inline QDouble fabs(QDouble a) { return a.x[0] < 0.0 || (a.x[0] == 0.0 && a.x[1] < 0.0) ? -a : a; }
inline QDouble abs(QDouble a) { return fabs(a); }
inline bool isfinite(QDouble a) { return std::isfinite(a.x[0]); }

inline QDouble ldexp(QDouble a, int n) {
    return {std::ldexp(a.x[0], n), std::ldexp(a.x[1], n), std::ldexp(a.x[2], n),
            std::ldexp(a.x[3], n)};
}

inline QDouble floor(QDouble a) {
    double f0 = std::floor(a.x[0]), f1 = 0.0, f2 = 0.0, f3 = 0.0;
    if (f0 == a.x[0]) {
        f1 = std::floor(a.x[1]);
        if (f1 == a.x[1]) {
            f2 = std::floor(a.x[2]);
            if (f2 == a.x[2]) f3 = std::floor(a.x[3]);
        }
    }
    return detail::qd_renorm(f0, f1, f2, f3, 0.0);
}

inline QDouble sqrt(QDouble a) {
    if (a.x[0] == 0.0) return QDouble(0.0);
    // Newton on 1/sqrt (division-free update), digits double per pass
    QDouble r{1.0 / std::sqrt(a.x[0])};
    QDouble h = a * 0.5;
    for (int i = 0; i < 3; ++i) r = r + r * (0.5 - h * r * r);
    return r * a;
}

namespace detail {
inline const QDouble qd_ln2 = [] {
    // ln 2 = 2 atanh(1/3): positive series, one digit per ~0.95 terms
    QDouble third = QDouble(1.0) / QDouble(3.0);
    QDouble x2 = third * third;
    QDouble term = third, s = third;
    for (int k = 1; k <= 72; ++k) {
        term = term * x2;
        s = s + term / double(2 * k + 1);
    }
    return s * 2.0;
}();
inline const double qd_eps = 2.4308653429145085e-63; // 2^-208
}

inline QDouble exp(QDouble a) {
    // exp(a) = 2^m (e^r)^{2^16}, r = (a - m ln2) / 2^16, |r| <~ 5.3e-6
    if (a.x[0] <= -709.0) return QDouble(0.0);
    if (a.x[0] >= 709.0) return QDouble(std::numeric_limits<double>::infinity());
    double m = std::floor(a.x[0] / detail::qd_ln2.x[0] + 0.5);
    QDouble r = (a - detail::qd_ln2 * m) * (1.0 / 65536.0);
    // Taylor of e^r - 1
    QDouble p = r * r * 0.5;
    QDouble s = r + p;
    double fact = 2.0;
    do {
        p = p * r;
        fact += 1.0;
        p = p / fact;
        s = s + p;
    } while (std::fabs(p.x[0]) > 1e-70 * std::fabs(s.x[0]) + 1e-300);
    // undo the 2^-16 scaling: s <- (1+s)^2 - 1 sixteen times
    for (int i = 0; i < 16; ++i) s = s * 2.0 + s * s;
    s = s + 1.0;
    return ldexp(s, int(m));
}

inline QDouble log(QDouble a) {
    // scale to [0.5,1), then Newton x -> x + m e^{-x} - 1 from the double seed
    int e;
    double mh = std::frexp(a.x[0], &e);
    (void)mh;
    QDouble m = ldexp(a, -e);
    QDouble x{std::log(m.x[0])};
    for (int i = 0; i < 3; ++i) x = x + m * exp(-x) - 1.0;
    return x + detail::qd_ln2 * double(e);
}

inline QDouble pow(QDouble a, QDouble b) { return exp(b * log(a)); }
inline QDouble pow(QDouble a, double b) { return exp(QDouble(b) * log(a)); }

inline QDouble pow_int(QDouble a, long n) {
    if (n < 0) return 1.0 / pow_int(a, -n);
    QDouble r{1.0}, base = a;
    while (n) {
        if (n & 1) r = r * base;
        base = base * base;
        n >>= 1;
    }
    return r;
}

inline QDouble fmin(QDouble a, QDouble b) { return a < b ? a : b; }
inline QDouble fmax(QDouble a, QDouble b) { return a < b ? b : a; }

inline std::ostream& operator<<(std::ostream& os, QDouble a) { return os << a.x[0]; }

template <> struct scalar_info<QDouble> {
    static constexpr double eps = 2.4308653429145085e-63; // 2^-208
    static constexpr int digits10 = 62;
};

} // namespace c2mm

#endif
