#pragma once

#include <cmath>
#include <cstdint>

namespace freelens {

// Counter-based random number generation. Every draw is a pure function of
// (seed, index), so parallel consumers get identical streams regardless of
// scheduling. The generator is frozen: splitmix64 finalizer for the bit
// stream, Wichura's AS 241 rational approximation for the normal quantile.

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Decorrelates a stream index from a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed ^ 0xd1b54a32d192ed03ULL) + stream);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a,
                                    std::uint64_t b) {
  return derive_seed(derive_seed(seed, a), b);
}

constexpr std::uint64_t random_bits(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(derive_seed(seed, 0x2545f4914f6cdd1dULL) + index);
}

// Uniform on the open interval (0,1); 53 bits, offset by half an ulp so the
// endpoints are unreachable.
inline double uniform_open01(std::uint64_t seed, std::uint64_t index) {
  return (static_cast<double>(random_bits(seed, index) >> 11) + 0.5) *
         0x1.0p-53;
}

namespace detail {

inline double horner8(const double (&c)[8], double r) {
  double s = c[7];
  for (int i = 6; i >= 0; --i) s = s * r + c[i];
  return s;
}

}  // namespace detail

// Inverse of the standard normal CDF (Wichura 1988, AS 241, PPND16).
// Relative accuracy about 1e-16 on (0,1).
inline double inverse_normal_cdf(double p) {
  static constexpr double a[8] = {
      3.3871328727963666080e0,  1.3314166789178437745e2,
      1.9715909503065514427e3,  1.3731693765509461125e4,
      4.5921953931549871457e4,  6.7265770927008700853e4,
      3.3430575583588128105e4,  2.5090809287301226727e3};
  static constexpr double b[8] = {
      1.0,                      4.2313330701600911252e1,
      6.8718700749205790830e2,  5.3941960214247511077e3,
      2.1213794301586595867e4,  3.9307895800092710610e4,
      2.8729085735721942674e4,  5.2264952788528545610e3};
  static constexpr double c[8] = {
      1.42343711074968357734e0, 4.63033784615654529590e0,
      5.76949722146069140550e0, 3.64784832476320460504e0,
      1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4};
  static constexpr double d[8] = {
      1.0,                      2.05319162663775882187e0,
      1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2,
      5.47593808499534494600e-4, 1.05075007164441684324e-9};
  static constexpr double e[8] = {
      6.65790464350110377720e0, 5.46378491116411436990e0,
      1.78482653991729133580e0, 2.96560571828504891230e-1,
      2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7};
  static constexpr double f[8] = {
      1.0,                      5.99832206555887937690e-1,
      1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5,
      1.42151175831644588870e-7, 2.04426310338993978564e-15};

  const double q = p - 0.5;
  if (std::abs(q) <= 0.425) {
    const double r = 0.180625 - q * q;
    return q * detail::horner8(a, r) / detail::horner8(b, r);
  }
  double r = q < 0 ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = detail::horner8(c, r) / detail::horner8(d, r);
  } else {
    r -= 5.0;
    val = detail::horner8(e, r) / detail::horner8(f, r);
  }
  return q < 0 ? -val : val;
}

// The index-th standard normal draw of the stream identified by seed.
inline double normal_draw(std::uint64_t seed, std::uint64_t index) {
  return inverse_normal_cdf(uniform_open01(seed, index));
}

}  // namespace freelens
