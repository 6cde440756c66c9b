#pragma once

#include <cmath>
#include <type_traits>

namespace subrift {

// Forward-mode dual number. Nesting Dual<Dual<double>> yields exact second
// derivatives, which is how value-only user models get the Hessians the
// variational integrators need.
template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative part

  Dual() = default;
  Dual(double value) : v(value), d(T{}) {}  // NOLINT: implicit by design
  Dual(T value, T deriv) : v(value), d(deriv) {}
};

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
  return {-a.v, -a.d};
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <class T>
Dual<T> operator/(const Dual<T>& a, const Dual<T>& b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

template <class T>
Dual<T> operator+(double a, const Dual<T>& b) { return Dual<T>(a) + b; }
template <class T>
Dual<T> operator+(const Dual<T>& a, double b) { return a + Dual<T>(b); }
template <class T>
Dual<T> operator-(double a, const Dual<T>& b) { return Dual<T>(a) - b; }
template <class T>
Dual<T> operator-(const Dual<T>& a, double b) { return a - Dual<T>(b); }
template <class T>
Dual<T> operator*(double a, const Dual<T>& b) { return Dual<T>(a) * b; }
template <class T>
Dual<T> operator*(const Dual<T>& a, double b) { return a * Dual<T>(b); }
template <class T>
Dual<T> operator/(double a, const Dual<T>& b) { return Dual<T>(a) / b; }
template <class T>
Dual<T> operator/(const Dual<T>& a, double b) { return a / Dual<T>(b); }

inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) { return value_of(x.v); }

template <class T>
bool operator<(const Dual<T>& a, const Dual<T>& b) { return value_of(a) < value_of(b); }
template <class T>
bool operator<(const Dual<T>& a, double b) { return value_of(a) < b; }
template <class T>
bool operator>(const Dual<T>& a, double b) { return value_of(a) > b; }
template <class T>
bool operator==(const Dual<T>& a, double b) { return value_of(a) == b; }

using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;
using std::tanh;

template <class T>
Dual<T> sin(const Dual<T>& a) {
  return {sin(a.v), a.d * cos(a.v)};
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
  return {cos(a.v), -a.d * sin(a.v)};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  T e = exp(a.v);
  return {e, a.d * e};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  return {log(a.v), a.d / a.v};
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  T r = sqrt(a.v);
  return {r, a.d / (2.0 * r)};
}
template <class T>
Dual<T> tanh(const Dual<T>& a) {
  T t = tanh(a.v);
  return {t, a.d * (1.0 - t * t)};
}

// |x| with the sign rule for the derivative; only valid away from 0, which is
// where value-only models are expected to be differentiated.
template <class T>
Dual<T> abs(const Dual<T>& a) {
  return value_of(a) >= 0.0 ? a : -a;
}

using Dual1 = Dual<double>;
using Dual2 = Dual<Dual<double>>;

}  // namespace subrift
