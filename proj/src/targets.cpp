#include "rankattn/targets.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "rankattn/errors.hpp"

namespace rankattn {

namespace {

void require_targets(const Mat& X, const Vec& y) {
  if (X.cols() == 0) throw EmptyContextError("no target points");
  if (X.rows() != y.size()) throw ConfigurationError("source dimension does not match targets");
}

template <class Better>
Selection best_of(Eigen::Index n, const Vec& score, Better better) {
  Selection s;
  for (Eigen::Index i = 1; i < n; ++i) {
    if (better(score[i], score[s.index])) {
      s.index = static_cast<int>(i);
      s.tie = false;
    } else if (score[i] == score[s.index]) {
      s.tie = true;
    }
  }
  return s;
}

}  // namespace

Selection nearest_index(const Mat& X, const Vec& y) {
  require_targets(X, y);
  Vec dist = (X.colwise() - y).colwise().norm().transpose();
  return best_of(X.cols(), dist, std::less<>());
}

Vec nearest_neighbor(const Mat& X, const Vec& y) { return X.col(nearest_index(X, y).index); }

Selection biased_nearest_index(const Mat& X, const Vec& y, const Vec& b) {
  require_targets(X, y);
  if (b.size() != X.cols())
    throw ConfigurationError("bias has length " + std::to_string(b.size()) + ", expected " + std::to_string(X.cols()));
  Vec score = (X.colwise() - y).colwise().squaredNorm().transpose() + b;
  return best_of(X.cols(), score, std::less<>());
}

Vec biased_nearest_neighbor(const Mat& X, const Vec& y, const Vec& b) {
  return X.col(biased_nearest_index(X, y, b).index);
}

Selection biased_argmax_index(const Mat& X, const Vec& y, const Vec& b) {
  require_targets(X, y);
  if (b.size() != X.cols()) throw ConfigurationError("bias length does not match target count");
  Vec score = X.transpose() * y + b;
  return best_of(X.cols(), score, std::greater<>());
}

Vec biased_argmax_neighbor(const Mat& X, const Vec& y, const Vec& b) {
  return X.col(biased_argmax_index(X, y, b).index);
}

std::vector<int> farthest_indices(const Mat& X) {
  const auto N = X.cols();
  if (N < 2) throw EmptyContextError("farthest neighbor needs N >= 2");
  std::vector<int> out(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    int best = -1;
    double best_d = -1.0;
    for (Eigen::Index j = 0; j < N; ++j) {
      if (j == i) continue;
      const double dist = (X.col(j) - X.col(i)).squaredNorm();
      if (dist > best_d) {
        best_d = dist;
        best = static_cast<int>(j);
      }
    }
    out[static_cast<std::size_t>(i)] = best;
  }
  return out;
}

Mat farthest_neighbor_selfattn(const Mat& X) {
  const auto idx = farthest_indices(X);
  Mat out(X.rows(), X.cols());
  for (Eigen::Index i = 0; i < X.cols(); ++i) out.col(i) = X.col(idx[static_cast<std::size_t>(i)]);
  return out;
}

SignValue surrogate_target(const Vec& x, const Vec& y) {
  const double s = x.dot(y);
  if (s == 0.0) return {1, true};
  return {s > 0.0 ? 1 : -1, false};
}

double psi(int a, double x) {
  // H_{a-n}(x) = 1 exactly for n <= floor(x + a); the alternating sum over
  // n = 1..m is -1 for odd m and 0 for even m.
  const double shifted = x + a;
  const double h_a = shifted >= 0.0 ? 1.0 : 0.0;
  double m = std::floor(shifted);
  if (m < 0.0) m = 0.0;
  if (m > 2.0 * a) m = 2.0 * a;
  const long count = static_cast<long>(m);
  const double alt = (count % 2 == 1) ? -1.0 : 0.0;
  return h_a + alt - 0.5;
}

double psi_direct(int a, double x) {
  double s = (x + a >= 0.0) ? 1.0 : 0.0;
  for (int n = 1; n <= 2 * a; ++n) {
    const double h = (x + (a - n) >= 0.0) ? 1.0 : 0.0;
    s += (n % 2 == 0 ? 1.0 : -1.0) * h;
  }
  return s - 0.5;
}

}  // namespace rankattn
