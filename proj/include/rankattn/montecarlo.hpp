#pragma once

#include <cstdint>
#include <functional>

#include "rankattn/exec.hpp"
#include "rankattn/geometry.hpp"

namespace rankattn {

struct McEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample sd / sqrt(n)
  std::int64_t n = 0;
  std::uint64_t seed = 0;
};

// |mean - reference| <= sigmas * std_error.
bool within_band(const McEstimate& e, double reference, double sigmas = 3.0);

// Samples are drawn in fixed chunks of kMcChunk; chunk c uses stream c + 1 of
// `seed`. Chunk statistics are merged in chunk order, so the serial and the
// OpenMP path return identical bits.
inline constexpr std::int64_t kMcChunk = 4096;
using Sampler = std::function<double(SeededRng&)>;
McEstimate run_estimator(std::int64_t n, std::uint64_t seed, const Sampler& sample, Exec exec = Exec::parallel);

struct DistributionSpec {
  enum class Kind { sphere_iid, orthogonal_DN, gaussian_source, scaled_sphere };
  Kind kind = Kind::orthogonal_DN;
  int d = 2;
  int N = 2;
  double scale = 1.0;
  void validate() const;
};

// sphere_iid: i.i.d. unit targets and source. orthogonal_DN: targets from D_N,
// unit source. gaussian_source: D_N targets scaled by `scale`, source N(0, I).
// scaled_sphere: i.i.d. targets and source on the sphere of radius `scale`.
PointConfiguration sample_configuration(const DistributionSpec& dist, SeededRng& rng);

using Evaluable = std::function<Mat(const PointConfiguration&)>;
// Squared Frobenius error averaged over output columns.
McEstimate estimate_mse(const Evaluable& model, const Evaluable& target, const DistributionSpec& dist,
                        std::int64_t n, std::uint64_t seed, Exec exec = Exec::parallel);

struct Omega {
  Vec q, k;
};
// rho(z, omega) = sign(x^T k) sign(q^T y) with z = (x, y) uniform on the product of spheres.
McEstimate kernel_mc_check(int d, const Omega& omega, const Omega& omega_p, std::int64_t n, std::uint64_t seed,
                           Exec exec = Exec::parallel);
double kernel_closed_form(const Omega& omega, const Omega& omega_p);

// P_q(argmax_i <x_i,q><y,q> = argmax_i <x_i,y>) for q uniform on the sphere.
McEstimate edge_probability(int d, const Vec& x1, const Vec& x2, const Vec& y, std::int64_t n, std::uint64_t seed,
                            Exec exec = Exec::parallel);

// P(|<x1 - x2, y>| <= eps) for i.i.d. uniform points.
McEstimate close_pair_probability(int d, double eps, std::int64_t n, std::uint64_t seed, Exec exec = Exec::parallel);

// E||f - Mode(g_1..g_H)||^2 with orthogonal pairs (x1, x2), uniform y, fresh q per trial.
McEstimate majority_accuracy(int d, int H, std::int64_t n, std::uint64_t seed, Exec exec = Exec::parallel);

struct PsiNormResult {
  McEstimate estimate;
  bool precondition_ok = true;  // ||w|| >= d and a > ||w||
};
PsiNormResult psi_norm(int d, const Vec& w, int a, std::int64_t n, std::uint64_t seed, Exec exec = Exec::parallel);

using Probe = std::function<double(const Vec& w_head, const Vec& y)>;
enum class CorrelationForm {
  pointwise,   // E_{w,y} |psi_a(<w,y>) g|
  correlation  // E_w |E_y[psi_a(<w,y>) g]| with inner_n draws of y per w
};
McEstimate correlation_decay(int d, int r, int a, std::int64_t n, std::uint64_t seed, const Probe& g,
                             CorrelationForm form = CorrelationForm::pointwise, int inner_n = 256,
                             Exec exec = Exec::parallel);

struct OrthoCheckResult {
  Mat mean;
  Mat std_error;
  std::int64_t n = 0;
  std::uint64_t seed = 0;
  double fitted_s = 0.0;           // mean of the diagonal
  double max_offdiag_sigma = 0.0;  // largest |off-diagonal| / stderr
  double trace = 0.0;
};
OrthoCheckResult ortho_conjugation_check(int D, const Mat& X, std::int64_t n, std::uint64_t seed,
                                         Exec exec = Exec::parallel);

// E_y[sign(x^T y) P_l(x0^T y)] and its closed form P_l(x^T x0) eta_l ||P_l||.
McEstimate hecke_funk_check(int d, int l, const Vec& x, const Vec& x0, std::int64_t n, std::uint64_t seed,
                            Exec exec = Exec::parallel);
double hecke_funk_reference(int d, int l, const Vec& x, const Vec& x0);

// E[sign(x^T y) sign(x^T k) sign(q^T y)] with q^T k = s.
McEstimate target_head_mc(int d, double s, std::int64_t n, std::uint64_t seed, Exec exec = Exec::parallel);

}  // namespace rankattn
