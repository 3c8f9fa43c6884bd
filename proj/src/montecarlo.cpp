#include "rankattn/montecarlo.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <vector>

#include <omp.h>

#include "rankattn/errors.hpp"
#include "rankattn/spectral.hpp"
#include "rankattn/targets.hpp"

namespace rankattn {

namespace {

struct Moments {
  double count = 0.0, mean = 0.0, m2 = 0.0;

  void add(double x) {
    count += 1.0;
    const double delta = x - mean;
    mean += delta / count;
    m2 += delta * (x - mean);
  }

  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    const double total = count + o.count;
    const double delta = o.mean - mean;
    mean += delta * (o.count / total);
    m2 += o.m2 + delta * delta * (count * o.count / total);
    count = total;
  }
};

void require_n(std::int64_t n) {
  if (n < 2) throw InvalidArgument("Monte Carlo needs n >= 2, got " + std::to_string(n));
}

std::int64_t chunk_count(std::int64_t n) { return (n + kMcChunk - 1) / kMcChunk; }

// Runs body(chunk) for every chunk, serially or under OpenMP; exceptions are rethrown on the caller.
template <class Body>
void for_chunks(std::int64_t chunks, Exec exec, Body body) {
  if (exec == Exec::serial) {
    for (std::int64_t c = 0; c < chunks; ++c) body(c);
    return;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < chunks; ++c) {
    try {
      body(c);
    } catch (...) {
#pragma omp critical
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double sgn(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

}  // namespace

bool within_band(const McEstimate& e, double reference, double sigmas) {
  return std::abs(e.mean - reference) <= sigmas * e.std_error;
}

McEstimate run_estimator(std::int64_t n, std::uint64_t seed, const Sampler& sample, Exec exec) {
  require_n(n);
  const std::int64_t chunks = chunk_count(n);
  std::vector<Moments> parts(static_cast<std::size_t>(chunks));
  for_chunks(chunks, exec, [&](std::int64_t c) {
    SeededRng rng(seed, static_cast<std::uint64_t>(c) + 1);
    const std::int64_t end = std::min(n, (c + 1) * kMcChunk);
    Moments m;
    for (std::int64_t i = c * kMcChunk; i < end; ++i) m.add(sample(rng));
    parts[static_cast<std::size_t>(c)] = m;
  });
  Moments total;
  for (const auto& p : parts) total.merge(p);
  McEstimate e;
  e.mean = total.mean;
  e.std_error = std::sqrt(std::max(total.m2, 0.0) / (total.count - 1.0)) / std::sqrt(total.count);
  e.n = n;
  e.seed = seed;
  return e;
}

void DistributionSpec::validate() const {
  if (d < 1 || N < 1) throw InvalidDimension("distribution needs d >= 1 and N >= 1");
  if ((kind == Kind::orthogonal_DN || kind == Kind::gaussian_source) && N > d)
    throw ConfigurationError("orthogonal targets need N <= d");
  if (!(scale > 0.0)) throw ConfigurationError("scale must be positive");
}

PointConfiguration sample_configuration(const DistributionSpec& dist, SeededRng& rng) {
  PointConfiguration p;
  switch (dist.kind) {
    case DistributionSpec::Kind::sphere_iid:
      p.X = sample_sphere_columns(dist.d, dist.N, rng);
      p.y = sample_sphere(dist.d, rng);
      break;
    case DistributionSpec::Kind::orthogonal_DN:
      p.X = sample_orthonormal_sequence(dist.d, dist.N, rng);
      p.y = sample_sphere(dist.d, rng);
      break;
    case DistributionSpec::Kind::gaussian_source:
      p.X = dist.scale * sample_orthonormal_sequence(dist.d, dist.N, rng);
      p.y = sample_gaussian(dist.d, rng);
      p.scale = dist.scale;
      break;
    case DistributionSpec::Kind::scaled_sphere:
      p.X = dist.scale * sample_sphere_columns(dist.d, dist.N, rng);
      p.y = dist.scale * sample_sphere(dist.d, rng);
      p.scale = dist.scale;
      break;
  }
  return p;
}

McEstimate estimate_mse(const Evaluable& model, const Evaluable& target, const DistributionSpec& dist,
                        std::int64_t n, std::uint64_t seed, Exec exec) {
  dist.validate();
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const PointConfiguration p = sample_configuration(dist, rng);
        const Mat f = model(p);
        const Mat t = target(p);
        if (f.rows() != t.rows() || f.cols() != t.cols() || f.cols() == 0)
          throw ConfigurationError("model and target output shapes differ");
        return (f - t).squaredNorm() / static_cast<double>(f.cols());
      },
      exec);
}

double kernel_closed_form(const Omega& omega, const Omega& omega_p) {
  return kernel_arcsin(omega.q, omega_p.q, omega.k, omega_p.k);
}

McEstimate kernel_mc_check(int d, const Omega& omega, const Omega& omega_p, std::int64_t n, std::uint64_t seed,
                           Exec exec) {
  for (const Vec* v : {&omega.q, &omega.k, &omega_p.q, &omega_p.k})
    if (v->size() != d) throw InvalidDimension("omega components must have length d");
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Vec x = sample_sphere(d, rng);
        const Vec y = sample_sphere(d, rng);
        const double r1 = sgn(x.dot(omega.k)) * sgn(omega.q.dot(y));
        const double r2 = sgn(x.dot(omega_p.k)) * sgn(omega_p.q.dot(y));
        return r1 * r2;
      },
      exec);
}

McEstimate edge_probability(int d, const Vec& x1, const Vec& x2, const Vec& y, std::int64_t n, std::uint64_t seed,
                            Exec exec) {
  if (x1.size() != d || x2.size() != d || y.size() != d) throw InvalidDimension("inputs must have length d");
  const double a = std::abs((x1 - x2).dot(y));
  if (a == 0.0) throw DegenerateInputError("edge probability needs <x1 - x2, y> != 0");
  const bool truth_first = x1.dot(y) >= x2.dot(y);
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Vec q = sample_sphere(d, rng);
        const double yq = y.dot(q);
        const bool pick_first = x1.dot(q) * yq >= x2.dot(q) * yq;
        return pick_first == truth_first ? 1.0 : 0.0;
      },
      exec);
}

McEstimate close_pair_probability(int d, double eps, std::int64_t n, std::uint64_t seed, Exec exec) {
  if (!(eps > 0.0)) throw InvalidArgument("eps must be positive");
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Vec x1 = sample_sphere(d, rng);
        const Vec x2 = sample_sphere(d, rng);
        const Vec y = sample_sphere(d, rng);
        return std::abs((x1 - x2).dot(y)) <= eps ? 1.0 : 0.0;
      },
      exec);
}

McEstimate majority_accuracy(int d, int H, std::int64_t n, std::uint64_t seed, Exec exec) {
  if (H < 1) throw InvalidArgument("majority needs H >= 1");
  if (d < 2) throw InvalidDimension("majority needs d >= 2");
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Mat X = sample_orthonormal_sequence(d, 2, rng);
        const Vec y = sample_sphere(d, rng);
        const Vec diff = X.col(0) - X.col(1);
        int first = 0;
        for (int h = 0; h < H; ++h) {
          const Vec q = sample_sphere(d, rng);
          if (diff.dot(q) * y.dot(q) >= 0.0) ++first;
        }
        int mode;
        if (2 * first > H) {
          mode = 0;
        } else if (2 * first < H) {
          mode = 1;
        } else {
          mode = static_cast<int>(rng.below(2));
        }
        const int truth = nearest_index(X, y).index;
        return (X.col(truth) - X.col(mode)).squaredNorm();
      },
      exec);
}

PsiNormResult psi_norm(int d, const Vec& w, int a, std::int64_t n, std::uint64_t seed, Exec exec) {
  if (w.size() != d) throw InvalidDimension("w must have length d");
  PsiNormResult r;
  const double wn = w.norm();
  // Relative slack so that d * (unit vector) counts as norm d.
  r.precondition_ok = wn >= d * (1.0 - 1e-12) && a > wn;
  r.estimate = run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const double v = psi(a, w.dot(sample_gaussian(d, rng)));
        return v * v;
      },
      exec);
  return r;
}

McEstimate correlation_decay(int d, int r, int a, std::int64_t n, std::uint64_t seed, const Probe& g,
                             CorrelationForm form, int inner_n, Exec exec) {
  if (r < 1 || r > d) throw InvalidArgument("correlation decay needs 1 <= r <= d");
  if (form == CorrelationForm::correlation && inner_n < 1) throw InvalidArgument("inner_n must be >= 1");
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Vec w = static_cast<double>(d) * sample_sphere(d, rng);
        const Vec head = w.head(r);
        if (form == CorrelationForm::pointwise) {
          const Vec y = sample_gaussian(d, rng);
          return std::abs(psi(a, w.dot(y)) * g(head, y));
        }
        double s = 0.0;
        for (int j = 0; j < inner_n; ++j) {
          const Vec y = sample_gaussian(d, rng);
          s += psi(a, w.dot(y)) * g(head, y);
        }
        return std::abs(s / inner_n);
      },
      exec);
}

OrthoCheckResult ortho_conjugation_check(int D, const Mat& X, std::int64_t n, std::uint64_t seed, Exec exec) {
  if (D < 2) throw InvalidDimension("ortho check needs D >= 2");
  if (X.rows() != D || X.cols() != D) throw ConfigurationError("X must be D x D");
  require_n(n);
  const std::int64_t chunks = chunk_count(n);
  struct Part {
    Mat sum, sumsq;
  };
  std::vector<Part> parts(static_cast<std::size_t>(chunks));
  for_chunks(chunks, exec, [&](std::int64_t c) {
    SeededRng rng(seed, static_cast<std::uint64_t>(c) + 1);
    Part p{Mat::Zero(D, D), Mat::Zero(D, D)};
    const std::int64_t end = std::min(n, (c + 1) * kMcChunk);
    for (std::int64_t i = c * kMcChunk; i < end; ++i) {
      const Mat Q = sample_haar_orthogonal(D, rng);
      const Mat S = Q.transpose() * X * Q;
      p.sum += S;
      p.sumsq += S.cwiseProduct(S);
    }
    parts[static_cast<std::size_t>(c)] = std::move(p);
  });
  Mat sum = Mat::Zero(D, D), sumsq = Mat::Zero(D, D);
  for (const auto& p : parts) {
    sum += p.sum;
    sumsq += p.sumsq;
  }
  const double nn = static_cast<double>(n);
  OrthoCheckResult r;
  r.n = n;
  r.seed = seed;
  r.mean = sum / nn;
  Mat var = (sumsq - nn * r.mean.cwiseProduct(r.mean)) / (nn - 1.0);
  r.std_error = var.cwiseMax(0.0).cwiseSqrt() / std::sqrt(nn);
  r.fitted_s = r.mean.diagonal().mean();
  r.trace = X.trace();
  for (int i = 0; i < D; ++i)
    for (int j = 0; j < D; ++j)
      if (i != j && r.std_error(i, j) > 0.0)
        r.max_offdiag_sigma = std::max(r.max_offdiag_sigma, std::abs(r.mean(i, j)) / r.std_error(i, j));
  return r;
}

double hecke_funk_reference(int d, int l, const Vec& x, const Vec& x0) {
  const double t = std::clamp(x.dot(x0), -1.0, 1.0);
  return ultraspherical(d, l, t) * eta_closed_form(d, l) / std::sqrt(dim_N(d, l));
}

McEstimate hecke_funk_check(int d, int l, const Vec& x, const Vec& x0, std::int64_t n, std::uint64_t seed,
                            Exec exec) {
  if (x.size() != d || x0.size() != d) throw InvalidDimension("x and x0 must have length d");
  if (l < 0) throw InvalidArgument("degree must be >= 0");
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Vec y = sample_sphere(d, rng);
        const double t = std::clamp(x0.dot(y), -1.0, 1.0);
        return sgn(x.dot(y)) * ultraspherical(d, l, t);
      },
      exec);
}

McEstimate target_head_mc(int d, double s, std::int64_t n, std::uint64_t seed, Exec exec) {
  if (d < 2) throw InvalidDimension("need d >= 2");
  if (!(std::abs(s) <= 1.0)) throw DomainError("s must lie in [-1, 1]");
  Vec k = Vec::Zero(d), q = Vec::Zero(d);
  k[0] = 1.0;
  q[0] = s;
  q[1] = std::sqrt(1.0 - s * s);
  return run_estimator(
      n, seed,
      [&](SeededRng& rng) {
        const Vec x = sample_sphere(d, rng);
        const Vec y = sample_sphere(d, rng);
        return sgn(x.dot(y)) * sgn(x.dot(k)) * sgn(q.dot(y));
      },
      exec);
}

}  // namespace rankattn
