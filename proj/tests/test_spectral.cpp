#include <doctest.h>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/special_functions/binomial.hpp>
#include <boost/math/special_functions/gegenbauer.hpp>
#include <cmath>
#include <numbers>

#include "rankattn/errors.hpp"
#include "rankattn/spectral.hpp"

using namespace rankattn;

namespace {

constexpr double kPi = std::numbers::pi;

// Oracles built from Boost and the gamma function, independent of the library code.
double gegenbauer_normalized(int d, int l, double t) {
  const double lam = (d - 2) / 2.0;
  return boost::math::gegenbauer(static_cast<unsigned>(l), lam, t) /
         boost::math::gegenbauer(static_cast<unsigned>(l), lam, 1.0);
}

double ud_weight(int d, double t) {
  const double c = std::tgamma(d / 2.0) / (std::sqrt(kPi) * std::tgamma((d - 1) / 2.0));
  return c * std::pow(1.0 - t * t, (d - 3) / 2.0);
}

template <class F>
double integrate_weighted(int d, F f, double a = -1.0, double b = 1.0) {
  boost::math::quadrature::tanh_sinh<double> ts;
  return ts.integrate([&](double t) { return f(t) * ud_weight(d, t); }, a, b);
}

// Harmonic dimension as homogeneous polynomials of degree l minus those of degree l - 2.
double harmonic_dim(int d, int l) {
  auto homog = [&](int k) { return k < 0 ? 0.0 : boost::math::binomial_coefficient<double>(k + d - 1, d - 1); };
  return homog(l) - homog(l - 2);
}

}  // namespace

TEST_CASE("ultraspherical polynomials match normalized Gegenbauer polynomials") {
  for (int d : {3, 4, 5, 7, 10, 20})
    for (int l = 0; l <= 25; ++l)
      for (double t = -1.0; t <= 1.0; t += 0.05)
        CHECK(std::abs(ultraspherical(d, l, t) - gegenbauer_normalized(d, l, t)) <= 1e-11);
  for (double t : {-0.7, 0.0, 0.3}) {
    CHECK(ultraspherical(9, 0, t) == 1.0);
    CHECK(ultraspherical(9, 1, t) == doctest::Approx(t).epsilon(1e-15));
  }
  const auto all = ultraspherical_all(6, 12, 0.4);
  for (int l = 0; l <= 12; ++l) CHECK(all[static_cast<std::size_t>(l)] == ultraspherical(6, l, 0.4));
  CHECK_THROWS_AS(ultraspherical(5, 2, 1.5), DomainError);
  CHECK_THROWS_AS(ultraspherical(2, 2, 0.5), InvalidDimension);
}

TEST_CASE("orthogonality and norms under u_d") {
  const double cross = integrate_weighted(7, [](double t) { return ultraspherical(7, 3, t) * ultraspherical(7, 5, t); });
  CHECK(std::abs(cross) <= 1e-12);
  const double lib = integrate_ud(7, [](double t, double) { return ultraspherical(7, 3, t) * ultraspherical(7, 5, t); }).value;
  CHECK(std::abs(lib) <= 1e-12);
  for (int l = 0; l <= 20; ++l) {
    const double p2 = integrate_ud(5, [l](double t, double) {
                        const double p = ultraspherical(5, l, t);
                        return p * p;
                      }).value;
    CHECK(std::abs(p2 - 1.0 / harmonic_dim(5, l)) <= 1e-10);
  }
  CHECK(std::abs(integrate_ud(9, [](double, double) { return 1.0; }).value - 1.0) <= 1e-13);
}

TEST_CASE("harmonic and marginal dimensions") {
  for (int l = 0; l <= 30; ++l) CHECK(dim_N_exact(3, l) == 2 * l + 1);
  for (int d = 3; d <= 40; ++d) {
    CHECK(dim_N(d, 1) == d);
    CHECK(dim_N(d, 0) == 1.0);
    for (int l = 0; l <= 15; ++l) CHECK(dim_N(d, l) == doctest::Approx(harmonic_dim(d, l)).epsilon(1e-12));
  }
  // Exact values past 64 bits.
  const BigInt big = dim_N_exact(200, 60);
  CHECK(big > BigInt(std::numeric_limits<std::uint64_t>::max()));
  CHECK(dim_N(200, 60) == doctest::Approx(static_cast<double>(big)).epsilon(1e-12));

  for (int l = 0; l <= 50; ++l) CHECK(dim_M_upper_exact(1, l) == 1);
  CHECK(dim_M_upper_exact(2, 3) == 10);
  for (int r = 1; r <= 10; ++r) CHECK(dim_M_upper(r, 0) == 1.0);
  CHECK(dim_M_upper(5, 7) == boost::math::binomial_coefficient<double>(12, 7));
}

TEST_CASE("sign coefficients") {
  for (int d : {3, 5, 8})
    for (int l = 2; l <= 30; l += 2) CHECK(std::abs(eta_quadrature(d, l)) <= 1e-12);
  CHECK(eta_quadrature(3, 1) == doctest::Approx(std::sqrt(3.0) / 2.0).epsilon(1e-13));
  for (int l = 1; l <= 41; l += 2) {
    const double q = eta_quadrature(5, l), c = eta_closed_form(5, l);
    CHECK(std::abs(q - c) <= 1e-8 * std::abs(c));
  }
  // Independent projection: <sign, P_l> / ||P_l|| with ||P_l||^2 = 1/N.
  for (int l = 1; l <= 9; l += 2) {
    const double proj = 2.0 * integrate_weighted(6, [l](double t) { return gegenbauer_normalized(6, l, t); }, 0.0, 1.0);
    CHECK(eta_quadrature(6, l) == doctest::Approx(proj * std::sqrt(harmonic_dim(6, l))).epsilon(1e-9));
  }
}

TEST_CASE("arcsin coefficients are proportional to eta^2 / sqrt(N) with constant pi / 2") {
  CHECK(alpha_quadrature(3, 1) == doctest::Approx(kPi / 8.0 * std::sqrt(3.0)).epsilon(1e-13));
  for (int l = 2; l <= 20; l += 2) CHECK(std::abs(alpha_quadrature(5, l)) <= 1e-12);
  double lo = 1e300, hi = -1e300;
  for (int l = 1; l <= 21; l += 2) {
    const double eta = eta_quadrature(5, l);
    const double ratio = alpha_quadrature(5, l) * std::sqrt(harmonic_dim(5, l)) / (eta * eta);
    lo = std::min(lo, ratio);
    hi = std::max(hi, ratio);
  }
  CHECK((hi - lo) / lo <= 1e-6);
  CHECK(lo == doctest::Approx(kPi / 2.0).epsilon(1e-9));
}

TEST_CASE("spectral table invariants") {
  const auto t5 = build_spectral_table(5, 201);
  double partial = 0.0, prev = 0.0;
  for (int l = 0; l <= 201; ++l) {
    const auto& e = t5.at(l);
    CHECK(std::abs(e.pnorm2 - 1.0 / harmonic_dim(5, l)) <= 1e-10 * std::max(1.0, 1.0 / harmonic_dim(5, l)));
    if (l >= 2 && l % 2 == 0) CHECK(std::abs(e.eta) <= 1e-12);
    if (l % 2 == 1) {
      partial += e.eta * e.eta;
      CHECK(partial > prev);
      prev = partial;
    }
    CHECK(e.c == doctest::Approx(2.0 / kPi * e.eta * e.alpha));
  }
  CHECK(partial <= 1.0 + 1e-8);
  CHECK(partial >= 0.9);

  const auto t10 = build_spectral_table(10, 101);
  for (int l = 21; l <= 101; l += 2) {
    const double ratio = t10.at(l).eta * t10.at(l).eta / std::sqrt(10.0 / (std::pow(l, 3) * (l + 10)));
    CHECK(ratio >= 0.1);
    CHECK(ratio <= 10.0);
  }
  for (int d : {5, 10, 20}) {
    const auto t = build_spectral_table(d, 101);
    double floor = 1e300;
    for (int l = 1; l <= 101; l += 2) floor = std::min(floor, t.at(l).eta * t.at(l).eta * l * l);
    CHECK(floor > 0.01);
  }
}

TEST_CASE("table is bitwise identical serial and parallel") {
  const auto a = build_spectral_table(7, 61, Exec::serial);
  const auto b = build_spectral_table(7, 61, Exec::parallel);
  for (int l = 0; l <= 61; ++l) {
    CHECK(a.at(l).eta == b.at(l).eta);
    CHECK(a.at(l).alpha == b.at(l).alpha);
    CHECK(a.at(l).pnorm2 == b.at(l).pnorm2);
  }
}

TEST_CASE("arcsin kernel") {
  SeededRng rng(1);
  const Vec q = sample_sphere(6, rng), k = sample_sphere(6, rng);
  // asin has a square-root singularity at 1, so a dot product of 1 - 1e-16 moves the value by ~1e-8.
  CHECK(kernel_arcsin(q, q, k, k) == doctest::Approx(1.0).epsilon(1e-7));
  const Vec e0 = Vec::Unit(6, 0);
  CHECK(kernel_arcsin(e0, e0, e0, e0) == 1.0);
  Vec a = Vec::Zero(6), b = Vec::Zero(6);
  a[0] = 1.0;
  b[1] = 1.0;
  CHECK(kernel_arcsin(a, b, k, sample_sphere(6, rng)) == 0.0);
  const Vec qp = sample_sphere(6, rng), kp = sample_sphere(6, rng);
  CHECK(kernel_arcsin(q, qp, k, kp) ==
        doctest::Approx(4.0 / (kPi * kPi) * std::asin(q.dot(qp)) * std::asin(k.dot(kp))).epsilon(1e-14));
}

TEST_CASE("target-head correlation series is odd") {
  const auto t = build_spectral_table(6, 61);
  CHECK(std::abs(target_head_correlation(t, 0.0)) <= 1e-15);
  for (double s : {0.1, 0.5, 0.9}) CHECK(target_head_correlation(t, -s) == -target_head_correlation(t, s));
}

TEST_CASE("lower bound") {
  const auto t = build_spectral_table(10, 101);
  LowerBoundQuery q;
  q.d = 10;
  q.r = 1;
  q.l_max = 101;
  q.H = 0;
  double energy = 0.0;
  for (int l = 1; l <= 101; l += 2) energy += t.at(l).eta * t.at(l).eta;
  const auto zero = lower_bound(t, q);
  CHECK(zero.value == doctest::Approx(energy).epsilon(1e-14));
  CHECK(zero.tail_energy == doctest::Approx(1.0 - energy).epsilon(1e-12));
  CHECK(zero.value == doctest::Approx(ridge_error(t, 1e200)).epsilon(1e-14));

  double prev = 1e300;
  for (double H : {1.0, 10.0, 100.0, 1000.0}) {
    q.H = H;
    const double v = lower_bound(t, q).value;
    CHECK(v <= prev);
    prev = v;
  }
  q.H = 1e30;
  CHECK(lower_bound(t, q).value == 0.0);
  q.clamp_negative = false;
  CHECK(lower_bound(t, q).value < 0.0);

  // Per-term weights written out.
  q.H = 3;
  q.r = 2;
  q.clamp_negative = true;
  const auto res = lower_bound(t, q);
  for (const auto& term : res.terms) {
    const double w = 1.0 - 3.0 * boost::math::binomial_coefficient<double>(2 + term.l, term.l) / harmonic_dim(10, term.l);
    CHECK(term.weight == doctest::Approx(std::max(w, 0.0)).epsilon(1e-12));
    CHECK(term.contribution == doctest::Approx(term.weight * term.eta2).epsilon(1e-14));
  }

  // Larger truncation approaches the full energy.
  LowerBoundQuery q5{5, 1, 0.0, 401, true};
  CHECK(lower_bound(q5).value > 0.95);
}

TEST_CASE("regime thresholds") {
  const auto full = regime_thresholds(12, 12, 0.01);
  CHECK(full.H_high_accuracy < 1.0);
  for (double eps : {0.05, 0.25}) {
    const auto a = regime_thresholds(16, 2, eps), b = regime_thresholds(32, 2, eps);
    CHECK(b.H_high_accuracy > a.H_high_accuracy);
    CHECK(b.H_high_dimensional > a.H_high_dimensional);
  }
  const auto th = regime_thresholds(64, 1, 0.25);
  CHECK(th.H_high_accuracy == doctest::Approx(std::exp2(64 - 2 * std::log2(128.0))).epsilon(1e-14));
  CHECK(th.H_high_dimensional == doctest::Approx(0.5 * std::pow(64.0 / (2 * std::numbers::e * 5.0), 4.0)).epsilon(1e-12));
  CHECK_FALSE(th.high_accuracy_applies);
  CHECK(th.high_dimensional_applies);
  CHECK_THROWS_AS(regime_thresholds(8, 1, 0.0), InvalidArgument);
}

TEST_CASE("u measure is odd") {
  const auto t = build_spectral_table(16, 49);
  CHECK(std::abs(u_measure(t, 0.0)) <= 1e-9 * std::abs(u_measure(t, 0.3)));
  for (double s : {0.05, 0.3, 0.8}) CHECK(u_measure(t, -s) == doctest::Approx(-u_measure(t, s)).epsilon(1e-12));
}

TEST_CASE("ridge error") {
  const auto t = build_spectral_table(6, 61);
  CHECK(ridge_error(t, 1e-30) <= 1e-20);
  double energy = 0.0;
  for (int l = 1; l <= 61; l += 2) energy += t.at(l).eta * t.at(l).eta;
  CHECK(ridge_error(t, 1e30) == doctest::Approx(energy).epsilon(1e-12));
  double prev = 0.0;
  for (double lam = 1e-8; lam <= 1e4; lam *= 3.0) {
    const double v = ridge_error(t, lam);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("degrees of freedom") {
  const auto t = build_spectral_table(5, 41);
  CHECK(degrees_of_freedom(t, 1e40) <= 1e-20);
  double slots = 0.0, s = 0.0;
  for (int l = 1; l <= 41; l += 2) {
    slots += harmonic_dim(5, l);
    s += std::sqrt(t.at(l).N) * t.at(l).alpha;
  }
  CHECK(degrees_of_freedom(t, 1e-300) == doctest::Approx(slots * slots).epsilon(1e-12));
  for (double lam : {1e-3, 1e-5}) {
    // kappa / (kappa + lambda) <= kappa / lambda summed over all slots.
    const double bound = 4.0 / (kPi * kPi) * s * s / lam;
    CHECK(degrees_of_freedom(t, lam) <= bound);
  }
  CHECK_THROWS_AS(degrees_of_freedom(t, 0.0), InvalidArgument);
}
