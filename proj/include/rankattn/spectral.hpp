#pragma once

#include <functional>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "rankattn/exec.hpp"
#include "rankattn/geometry.hpp"

namespace rankattn {

using BigInt = boost::multiprecision::cpp_int;

// Degree-l ultraspherical polynomial for S^{d-1}, normalized to P_l(1) = 1.
double ultraspherical(int d, int l, double t);
// P_0(t) .. P_lmax(t).
std::vector<double> ultraspherical_all(int d, int lmax, double t);

// Dimension of degree-l spherical harmonics on S^{d-1}; N(d, 0) = 1.
BigInt dim_N_exact(int d, int l);
double dim_N(int d, int l);
// binom(r + l, l), exactly 1 when r = 1.
BigInt dim_M_upper_exact(int r, int l);
double dim_M_upper(int r, int l);

// Normalizing constant of u_d(t) = c_d (1 - t^2)^{(d-3)/2}; equals A_{d-2}/A_{d-1}.
double ud_constant(int d);

struct QuadResult {
  double value = 0.0;
  double error_bound = 0.0;
};

// Integral of f(t) u_d(t) dt over [-1, 1], evaluated as an integral in theta
// with t = sin(theta). f receives (t, theta). The split at theta = 0 isolates
// the kink of sign-type integrands.
QuadResult integrate_ud(int d, const std::function<double(double, double)>& f, double rel_tol = 1e-14);

double eta_quadrature(int d, int l);
double eta_closed_form(int d, int l);
double alpha_quadrature(int d, int l);

struct SpectralEntry {
  int l = 0;
  double N = 1.0;
  double pnorm2 = 1.0;
  double eta = 0.0;
  double eta_closed = 0.0;
  double alpha = 0.0;
  double c = 0.0;
  double max_quad_error = 0.0;
};

struct SpectralTable {
  int d = 3;
  int l_max = 0;
  std::vector<SpectralEntry> rows;  // rows[l]
  const SpectralEntry& at(int l) const { return rows.at(static_cast<std::size_t>(l)); }
};

SpectralTable build_spectral_table(int d, int l_max, Exec exec = Exec::parallel);

double kernel_arcsin(const Vec& q, const Vec& q_p, const Vec& k, const Vec& k_p);

// sum_l c_l P_l(s).
double target_head_correlation(const SpectralTable& table, double s);

struct LowerBoundQuery {
  int d = 3;
  int r = 1;
  double H = 0.0;
  int l_max = 101;
  bool clamp_negative = true;
};

struct LowerBoundTerm {
  int l = 0;
  double N = 0.0;
  double M = 0.0;
  double eta2 = 0.0;
  double weight = 0.0;
  double contribution = 0.0;
};

struct LowerBoundResult {
  double value = 0.0;
  std::vector<LowerBoundTerm> terms;
  // Energy of sign beyond l_max, 1 - sum eta_l^2 (Parseval).
  double tail_energy = 0.0;
  // Tail predicted by eta_l^2 >= c''/l^2 with c'' the smallest l^2 eta_l^2 in the table.
  double tail_c2_estimate = 0.0;
};

LowerBoundResult lower_bound(const SpectralTable& table, const LowerBoundQuery& q);
LowerBoundResult lower_bound(const LowerBoundQuery& q);

struct RegimeConstants {
  double c = 1.0, c_prime = 1.0, C = 1.0, C_prime = 1.0;
};

struct RegimeThresholds {
  double H_high_accuracy = 0.0;
  double H_high_dimensional = 0.0;
  bool high_accuracy_applies = false;
  bool high_dimensional_applies = false;
};

RegimeThresholds regime_thresholds(int d, int r, double eps, const RegimeConstants& k = {});

double u_measure(const SpectralTable& table, double t);
double ridge_error(const SpectralTable& table, double lambda);
double degrees_of_freedom(const SpectralTable& table, double lambda);

}  // namespace rankattn
