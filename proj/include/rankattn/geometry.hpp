#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>

namespace rankattn {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Deterministic generator keyed by (seed, stream). Distinct streams give
// independent sequences, which is how parallel batches stay reproducible.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed, std::uint64_t stream = 0);

  double normal();
  double uniform();  // [0, 1)
  std::uint64_t next_u64();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// Targets X (d x N, columns have norm `scale`) and a source point y.
struct PointConfiguration {
  Mat X;
  Vec y;
  double scale = 1.0;
};

Vec sample_gaussian(int d, SeededRng& rng);
Vec sample_sphere(int d, SeededRng& rng);

// First N columns of a Haar orthogonal matrix.
Mat sample_orthonormal_sequence(int d, int N, SeededRng& rng);
Mat sample_haar_orthogonal(int d, SeededRng& rng);

// d x N matrix of i.i.d. uniform unit columns.
Mat sample_sphere_columns(int d, int N, SeededRng& rng);

}  // namespace rankattn
