#include "rankattn/geometry.hpp"

#include <string>

#include "rankattn/errors.hpp"

namespace rankattn {

namespace {

std::seed_seq make_seq(std::uint64_t seed, std::uint64_t stream) {
  return std::seed_seq{static_cast<std::uint32_t>(seed),
                       static_cast<std::uint32_t>(seed >> 32),
                       static_cast<std::uint32_t>(stream),
                       static_cast<std::uint32_t>(stream >> 32),
                       0x9e3779b9u};
}

void check_dim(int d) {
  if (d < 1) throw InvalidDimension("dimension must be >= 1, got " + std::to_string(d));
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, std::uint64_t stream)
    : seed_(seed), stream_(stream) {
  auto seq = make_seq(seed, stream);
  engine_.seed(seq);
}

double SeededRng::normal() { return normal_(engine_); }
double SeededRng::uniform() { return uniform_(engine_); }
std::uint64_t SeededRng::next_u64() { return engine_(); }

std::uint64_t SeededRng::below(std::uint64_t n) {
  return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
}

Vec sample_gaussian(int d, SeededRng& rng) {
  check_dim(d);
  Vec v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.normal();
  return v;
}

Vec sample_sphere(int d, SeededRng& rng) {
  check_dim(d);
  for (;;) {
    Vec v = sample_gaussian(d, rng);
    const double n = v.norm();
    if (n > 0.0) return v / n;
  }
}

Mat sample_orthonormal_sequence(int d, int N, SeededRng& rng) {
  check_dim(d);
  if (N < 1 || N > d) {
    throw ConfigurationError("orthonormal sequence needs 1 <= N <= d, got N=" +
                             std::to_string(N) + ", d=" + std::to_string(d));
  }
  Mat G(d, N);
  for (int j = 0; j < N; ++j)
    for (int i = 0; i < d; ++i) G(i, j) = rng.normal();
  Eigen::HouseholderQR<Mat> qr(G);
  Mat Q = qr.householderQ() * Mat::Identity(d, N);
  const Mat& R = qr.matrixQR();
  for (int j = 0; j < N; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

Mat sample_haar_orthogonal(int d, SeededRng& rng) { return sample_orthonormal_sequence(d, d, rng); }

Mat sample_sphere_columns(int d, int N, SeededRng& rng) {
  Mat X(d, N);
  for (int j = 0; j < N; ++j) X.col(j) = sample_sphere(d, rng);
  return X;
}

}  // namespace rankattn
