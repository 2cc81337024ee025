// Minimal complex-over-R template so the same numerical kernels run on
// double, DDouble, and their complex extensions.  std::complex is only
// specified for built-in floating types, hence the local type; conversions
// to/from std::complex<double> are provided at the API boundary.
#ifndef C2MM_SCALAR_HPP
#define C2MM_SCALAR_HPP

#include <cmath>
#include <complex>
#include <type_traits>
#include "dd.hpp"
#include "qd.hpp"

namespace c2mm {

using std::exp;
using std::fabs;
using std::floor;
using std::isfinite;
using std::log;
using std::pow;
using std::sqrt;
using std::fmin;
using std::fmax;

template <class R>
struct Cplx {
    R re{}, im{};
    Cplx() = default;
    Cplx(R r) : re(r), im(R(0)) {}
    Cplx(R r, R i) : re(r), im(i) {}
    Cplx(double r) requires(!std::is_same_v<R, double>) : re(R(r)), im(R(0)) {}
    template <class S>
    explicit Cplx(const Cplx<S>& o) : re(R(o.re)), im(R(o.im)) {}
};

template <class R> Cplx<R> operator+(Cplx<R> a, Cplx<R> b) { return {a.re + b.re, a.im + b.im}; }
template <class R> Cplx<R> operator-(Cplx<R> a, Cplx<R> b) { return {a.re - b.re, a.im - b.im}; }
template <class R> Cplx<R> operator-(Cplx<R> a) { return {-a.re, -a.im}; }
template <class R> Cplx<R> operator*(Cplx<R> a, Cplx<R> b) {
    return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
}
template <class R> Cplx<R> operator*(Cplx<R> a, R s) { return {a.re * s, a.im * s}; }
template <class R> Cplx<R> operator*(R s, Cplx<R> a) { return a * s; }
template <class R> Cplx<R> operator/(Cplx<R> a, R s) { return {a.re / s, a.im / s}; }
template <class R> Cplx<R> operator/(Cplx<R> a, Cplx<R> b) {
    // Smith's algorithm to dodge overflow in b.re^2 + b.im^2.
    if (to_double(fabs(b.re)) >= to_double(fabs(b.im))) {
        R r = b.im / b.re, d = b.re + b.im * r;
        return {(a.re + a.im * r) / d, (a.im - a.re * r) / d};
    }
    R r = b.re / b.im, d = b.re * r + b.im;
    return {(a.re * r + a.im) / d, (a.im * r - a.re) / d};
}
template <class R> Cplx<R>& operator+=(Cplx<R>& a, Cplx<R> b) { a = a + b; return a; }
template <class R> Cplx<R>& operator-=(Cplx<R>& a, Cplx<R> b) { a = a - b; return a; }
template <class R> Cplx<R>& operator*=(Cplx<R>& a, Cplx<R> b) { a = a * b; return a; }

template <class R> Cplx<R> conj(Cplx<R> a) { return {a.re, -a.im}; }
template <class R> R abs2(Cplx<R> a) { return a.re * a.re + a.im * a.im; }
template <class R> R abs(Cplx<R> a) {
    R x = fabs(a.re), y = fabs(a.im);
    if (to_double(x) == 0.0) return y;
    if (to_double(y) == 0.0) return x;
    if (to_double(x) < to_double(y)) { R t = x; x = y; y = t; }
    R r = y / x;
    return x * sqrt(R(1) + r * r);
}

inline double to_double(const Cplx<double>& c) { return c.re; }

inline std::complex<double> to_std(const Cplx<double>& c) { return {c.re, c.im}; }
inline std::complex<double> to_std(const Cplx<DDouble>& c) { return {c.re.hi, c.im.hi}; }
template <class R>
Cplx<R> from_std(std::complex<double> z) { return {R(z.real()), R(z.imag())}; }

// Scalar/complex traits for generic code.
template <class T> struct real_of { using type = T; static T re(T v) { return v; } };
template <class R> struct real_of<Cplx<R>> { using type = R; static R re(Cplx<R> v) { return v.re; } };
template <class T> using real_of_t = typename real_of<T>::type;

template <class T> double mag(T v) { return std::fabs(to_double(v)); }
template <class R> double mag(Cplx<R> v) { return std::hypot(to_double(v.re), to_double(v.im)); }

using Cdd = Cplx<DDouble>;

} // namespace c2mm

#endif
