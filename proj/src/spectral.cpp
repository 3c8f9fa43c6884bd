#include "rankattn/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <string>

#include <boost/math/quadrature/gauss.hpp>
#include <omp.h>

#include "rankattn/errors.hpp"

namespace rankattn {

namespace {

constexpr double kPi = std::numbers::pi;

void require_d(int d) {
  if (d < 3) throw InvalidDimension("spherical quantities need d >= 3, got " + std::to_string(d));
}

BigInt binomial(long n, long k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  BigInt out = 1;
  for (long i = 1; i <= k; ++i) {
    out *= (n - k + i);
    out /= i;
  }
  return out;
}

}  // namespace

std::vector<double> ultraspherical_all(int d, int lmax, double t) {
  require_d(d);
  if (!(std::abs(t) <= 1.0)) throw DomainError("ultraspherical argument outside [-1, 1]");
  std::vector<double> p(static_cast<std::size_t>(std::max(lmax, 0) + 1));
  p[0] = 1.0;
  if (lmax >= 1) p[1] = t;
  for (int l = 1; l < lmax; ++l) {
    p[l + 1] = ((2.0 * l + d - 2) * t * p[l] - l * p[l - 1]) / (l + d - 2);
  }
  return p;
}

double ultraspherical(int d, int l, double t) {
  require_d(d);
  if (l < 0) throw InvalidArgument("polynomial degree must be >= 0");
  if (!(std::abs(t) <= 1.0)) throw DomainError("ultraspherical argument outside [-1, 1]");
  if (l == 0) return 1.0;
  double prev = 1.0, cur = t;
  for (int k = 1; k < l; ++k) {
    const double next = ((2.0 * k + d - 2) * t * cur - k * prev) / (k + d - 2);
    prev = cur;
    cur = next;
  }
  return cur;
}

BigInt dim_N_exact(int d, int l) {
  require_d(d);
  if (l < 0) throw InvalidArgument("degree must be >= 0");
  if (l == 0) return 1;
  BigInt num = binomial(l + d - 3, l - 1) * (2 * l + d - 2);
  return num / l;
}

double dim_N(int d, int l) { return dim_N_exact(d, l).convert_to<double>(); }

BigInt dim_M_upper_exact(int r, int l) {
  if (r < 1) throw InvalidDimension("rank must be >= 1");
  if (l < 0) throw InvalidArgument("degree must be >= 0");
  if (r == 1) return 1;
  return binomial(r + l, l);
}

double dim_M_upper(int r, int l) { return dim_M_upper_exact(r, l).convert_to<double>(); }

double ud_constant(int d) {
  require_d(d);
  return std::exp(std::lgamma(0.5 * d) - 0.5 * std::log(kPi) - std::lgamma(0.5 * (d - 1)));
}

QuadResult integrate_ud(int d, const std::function<double(double, double)>& f, double rel_tol) {
  const double cd = ud_constant(d);
  auto g = [&](double theta) {
    const double c = std::cos(theta);
    return f(std::sin(theta), theta) * cd * std::pow(c, d - 2);
  };
  using GL = boost::math::quadrature::gauss<double, 30>;
  // Composite rule on 2^k equal panels per half; stop once doubling changes
  // the result by less than rel_tol times the integral of |g|.
  auto composite = [&](int panels, double* l1) {
    double total = 0.0, abs_total = 0.0;
    const double w = (kPi / 2) / panels;
    for (int half = 0; half < 2; ++half) {
      const double start = half == 0 ? -kPi / 2 : 0.0;
      for (int p = 0; p < panels; ++p) {
        const double a = start + p * w, b = start + (p + 1) * w;
        total += GL::integrate(g, a, b);
        abs_total += GL::integrate([&](double th) { return std::abs(g(th)); }, a, b);
      }
    }
    *l1 = abs_total;
    return total;
  };
  double l1 = 0.0;
  double prev = composite(1, &l1);
  for (int panels = 2; panels <= 4096; panels *= 2) {
    const double cur = composite(panels, &l1);
    const double diff = std::abs(cur - prev);
    if (diff <= rel_tol * l1 || diff == 0.0) return QuadResult{cur, diff};
    prev = cur;
  }
  throw ToleranceFailure("quadrature did not converge (d=" + std::to_string(d) + ")", std::abs(prev));
}

double eta_quadrature(int d, int l) {
  auto q = integrate_ud(d, [&](double t, double) {
    const double p = ultraspherical(d, l, t);
    return t > 0.0 ? p : (t < 0.0 ? -p : 0.0);
  });
  return std::sqrt(dim_N(d, l)) * q.value;
}

double eta_closed_form(int d, int l) {
  require_d(d);
  if (l % 2 == 0) return 0.0;
  // Rodrigues' formula reduces <sign, P_l> to the t^{l-1} coefficient of (1-t^2)^m at 0.
  const double m = l + 0.5 * (d - 3);
  const int k = (l - 1) / 2;
  const double log_rodrigues = std::lgamma(0.5 * (d - 1)) - l * std::log(2.0) - std::lgamma(l + 0.5 * (d - 1));
  const double log_binom = std::lgamma(m + 1.0) - std::lgamma(k + 1.0) - std::lgamma(m - k + 1.0);
  const double log_abs = std::log(2.0) + 0.5 * std::log(dim_N(d, l)) + std::log(ud_constant(d)) +
                         log_rodrigues + log_binom + std::lgamma(static_cast<double>(l));
  const double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * std::exp(log_abs);
}

double alpha_quadrature(int d, int l) {
  // arcsin(sin theta) = theta on [-pi/2, pi/2].
  auto q = integrate_ud(d, [&](double t, double theta) { return theta * ultraspherical(d, l, t); });
  return std::sqrt(dim_N(d, l)) * q.value;
}

namespace {

SpectralEntry make_entry(int d, int l) {
  SpectralEntry e;
  e.l = l;
  e.N = dim_N(d, l);
  const double sqrtN = std::sqrt(e.N);
  auto pn = integrate_ud(d, [&](double t, double) {
    const double p = ultraspherical(d, l, t);
    return p * p;
  });
  auto et = integrate_ud(d, [&](double t, double) {
    const double p = ultraspherical(d, l, t);
    return t > 0.0 ? p : (t < 0.0 ? -p : 0.0);
  });
  auto al = integrate_ud(d, [&](double t, double theta) { return theta * ultraspherical(d, l, t); });
  e.pnorm2 = pn.value;
  e.eta = sqrtN * et.value;
  e.eta_closed = eta_closed_form(d, l);
  e.alpha = sqrtN * al.value;
  e.c = 2.0 / kPi * e.eta * e.alpha;
  e.max_quad_error = std::max({pn.error_bound, sqrtN * et.error_bound, sqrtN * al.error_bound});
  return e;
}

}  // namespace

SpectralTable build_spectral_table(int d, int l_max, Exec exec) {
  require_d(d);
  if (l_max < 0) throw InvalidArgument("l_max must be >= 0");
  SpectralTable table;
  table.d = d;
  table.l_max = l_max;
  table.rows.resize(static_cast<std::size_t>(l_max) + 1);
  if (exec == Exec::serial) {
    for (int l = 0; l <= l_max; ++l) table.rows[static_cast<std::size_t>(l)] = make_entry(d, l);
    return table;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int l = 0; l <= l_max; ++l) {
    try {
      table.rows[static_cast<std::size_t>(l)] = make_entry(d, l);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return table;
}

double kernel_arcsin(const Vec& q, const Vec& q_p, const Vec& k, const Vec& k_p) {
  auto clip = [](double x) { return std::clamp(x, -1.0, 1.0); };
  return 4.0 / (kPi * kPi) * std::asin(clip(q.dot(q_p))) * std::asin(clip(k.dot(k_p)));
}

double target_head_correlation(const SpectralTable& table, double s) {
  auto p = ultraspherical_all(table.d, table.l_max, s);
  double sum = 0.0;
  for (int l = 0; l <= table.l_max; ++l) sum += table.at(l).c * p[static_cast<std::size_t>(l)];
  return sum;
}

LowerBoundResult lower_bound(const SpectralTable& table, const LowerBoundQuery& q) {
  if (q.r < 1 || q.r > q.d) throw InvalidArgument("lower bound needs 1 <= r <= d");
  if (q.H < 0.0) throw InvalidArgument("H must be >= 0");
  if (table.d != q.d || table.l_max < q.l_max) throw InvalidArgument("spectral table does not cover the query");
  LowerBoundResult res;
  double energy = 0.0, c2 = 0.0, inv_sq = 0.0;
  bool first = true;
  for (int l = 1; l <= q.l_max; l += 2) {
    const auto& e = table.at(l);
    LowerBoundTerm t;
    t.l = l;
    t.N = e.N;
    t.M = dim_M_upper(q.r, l);
    t.eta2 = e.eta * e.eta;
    t.weight = 1.0 - q.H * t.M / t.N;
    if (q.clamp_negative && t.weight < 0.0) t.weight = 0.0;
    t.contribution = t.weight * t.eta2;
    res.value += t.contribution;
    energy += t.eta2;
    const double scaled = t.eta2 * l * l;
    c2 = first ? scaled : std::min(c2, scaled);
    first = false;
    inv_sq += 1.0 / (static_cast<double>(l) * l);
    res.terms.push_back(t);
  }
  res.tail_energy = 1.0 - energy;
  res.tail_c2_estimate = c2 * (kPi * kPi / 8.0 - inv_sq);
  return res;
}

LowerBoundResult lower_bound(const LowerBoundQuery& q) {
  return lower_bound(build_spectral_table(q.d, q.l_max), q);
}

RegimeThresholds regime_thresholds(int d, int r, double eps, const RegimeConstants& k) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  if (d < 1 || r < 1) throw InvalidDimension("d and r must be positive");
  RegimeThresholds out;
  out.H_high_accuracy = k.C * std::exp2(d - (r + 1) * std::log2(2.0 * d / r));
  const double p = k.C_prime / eps;
  const double base = d / (2.0 * std::numbers::e * (r + p));
  out.H_high_dimensional = 0.5 * std::exp(p * std::log(base));
  out.high_accuracy_applies = r <= d - 3 && eps <= k.c / (d + 1);
  const double denom = d - 2.0 * std::numbers::e * std::numbers::e * r;
  out.high_dimensional_applies = d >= 5 && denom > 0.0 && eps >= k.c_prime / denom;
  return out;
}

double u_measure(const SpectralTable& table, double t) {
  auto p = ultraspherical_all(table.d, table.l_max, t);
  double sum = 0.0;
  for (int l = 1; l <= table.l_max; l += 2) {
    const auto& e = table.at(l);
    if (e.alpha == 0.0) continue;
    sum += e.eta / e.alpha * e.N * p[static_cast<std::size_t>(l)];
  }
  return kPi / 2.0 * sum;
}

double ridge_error(const SpectralTable& table, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  double sum = 0.0;
  for (int l = 1; l <= table.l_max; l += 2) {
    const auto& e = table.at(l);
    const double a = 2.0 / kPi * e.alpha;
    const double shrink = lambda * e.N / (a * a + lambda * e.N);
    sum += e.eta * e.eta * shrink * shrink;
  }
  return sum;
}

double degrees_of_freedom(const SpectralTable& table, double lambda) {
  if (!(lambda > 0.0)) throw InvalidArgument("lambda must be positive");
  double sum = 0.0;
  for (int l = 1; l <= table.l_max; l += 2) {
    for (int lp = 1; lp <= table.l_max; lp += 2) {
      const auto& a = table.at(l);
      const auto& b = table.at(lp);
      const double kappa = 4.0 / (kPi * kPi) * a.alpha * b.alpha / std::sqrt(a.N * b.N);
      sum += a.N * b.N * kappa / (kappa + lambda);
    }
  }
  return sum;
}

}  // namespace rankattn
