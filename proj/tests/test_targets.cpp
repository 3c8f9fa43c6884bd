#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rankattn/errors.hpp"
#include "rankattn/targets.hpp"

using namespace rankattn;

namespace {

Vec unit2(double deg) {
  const double r = deg * std::numbers::pi / 180.0;
  Vec v(2);
  v << std::cos(r), std::sin(r);
  return v;
}

// Brute-force argmin over columns of an arbitrary score, written without the library.
template <class Score>
int brute_argmin(int N, Score s) {
  int best = 0;
  for (int i = 1; i < N; ++i)
    if (s(i) < s(best)) best = i;
  return best;
}

}  // namespace

TEST_CASE("nearest neighbor") {
  SeededRng rng(1);
  const Mat X = sample_sphere_columns(5, 4, rng);
  CHECK(nearest_neighbor(X, X.col(1)) == X.col(1));

  Mat E = Mat::Identity(2, 2);
  Vec y(2);
  y << 0.9, 0.436;
  y.normalize();
  CHECK(nearest_neighbor(E, y) == E.col(0));

  CHECK_THROWS_AS(nearest_neighbor(Mat(3, 0), Vec::Zero(3)), EmptyContextError);
}

TEST_CASE("on the sphere nearest equals largest inner product, and is rotation and permutation invariant") {
  SeededRng rng(2);
  for (int t = 0; t < 500; ++t) {
    const Mat X = sample_sphere_columns(6, 5, rng);
    const Vec y = sample_sphere(6, rng);
    Eigen::Index best;
    (X.transpose() * y).maxCoeff(&best);
    CHECK(nearest_index(X, y).index == best);

    const Mat Q = sample_haar_orthogonal(6, rng);
    CHECK((nearest_neighbor(Q * X, Q * y) - Q * nearest_neighbor(X, y)).norm() <= 1e-10);

    Mat Xp = X;
    Xp.col(0).swap(Xp.col(4));
    CHECK(nearest_neighbor(Xp, y) == nearest_neighbor(X, y));
  }
}

TEST_CASE("ties break to the lowest index with a flag") {
  Mat X(1, 3);
  X << 1.0, -1.0, 1.0;
  const auto s = nearest_index(X, Vec::Constant(1, 2.0));
  CHECK(s.index == 0);
  CHECK(s.tie);
}

TEST_CASE("biased nearest neighbor") {
  SeededRng rng(3);
  for (int t = 0; t < 300; ++t) {
    const Mat X = sample_sphere_columns(3, 4, rng);
    const Vec y = sample_sphere(3, rng);
    Vec b(4);
    for (int i = 0; i < 4; ++i) b[i] = rng.normal();
    const int oracle = brute_argmin(4, [&](int i) { return (X.col(i) - y).squaredNorm() + b[i]; });
    CHECK(biased_nearest_index(X, y, b).index == oracle);
    CHECK(biased_nearest_neighbor(X, y, Vec::Zero(4)) == nearest_neighbor(X, y));
    // On the sphere, argmin ||x_i - y||^2 + b_i = argmax <x_i, y> - b_i / 2.
    CHECK(biased_argmax_index(X, y, -b / 2.0).index == oracle);
  }
  SUBCASE("a dominating bias on x1 always selects x2") {
    Vec b(2);
    b << 10.0, 0.0;
    for (int t = 0; t < 100; ++t) {
      const Mat X = sample_sphere_columns(4, 2, rng);
      const Vec y = sample_sphere(4, rng);
      CHECK(biased_nearest_index(X, y, b).index == 1);
      CHECK(biased_argmax_index(X, y, -b).index == 1);
    }
  }
  CHECK_THROWS_AS(biased_nearest_neighbor(Mat::Identity(3, 3), Vec::Zero(3), Vec::Zero(2)), ConfigurationError);
  CHECK_THROWS_AS(biased_argmax_neighbor(Mat::Identity(3, 3), Vec::Zero(3), Vec::Zero(4)), ConfigurationError);
}

TEST_CASE("farthest neighbor self-attention target") {
  SeededRng rng(4);
  const Mat X2 = sample_sphere_columns(3, 2, rng);
  const Mat out2 = farthest_neighbor_selfattn(X2);
  CHECK(out2.col(0) == X2.col(1));
  CHECK(out2.col(1) == X2.col(0));

  Mat A(2, 3);
  A << unit2(0), unit2(90), unit2(170);
  CHECK(farthest_indices(A)[0] == 2);

  const Mat X3 = sample_sphere_columns(4, 3, rng);
  const Mat out = farthest_neighbor_selfattn(X3);
  std::vector<int> p{0, 1, 2};
  do {
    Mat Xp(4, 3);
    for (int i = 0; i < 3; ++i) Xp.col(i) = X3.col(p[static_cast<std::size_t>(i)]);
    const Mat outp = farthest_neighbor_selfattn(Xp);
    for (int i = 0; i < 3; ++i) CHECK(outp.col(i) == out.col(p[static_cast<std::size_t>(i)]));
  } while (std::next_permutation(p.begin(), p.end()));

  CHECK_THROWS_AS(farthest_neighbor_selfattn(sample_sphere_columns(3, 1, rng)), EmptyContextError);
}

TEST_CASE("surrogate target") {
  SeededRng rng(5);
  const Vec x = sample_sphere(4, rng);
  CHECK(surrogate_target(x, x).value == 1);
  Vec a(2), b(2);
  a << 1, 0;
  b << 0, 1;
  const auto s = surrogate_target(a, b);
  CHECK(s.value == 1);
  CHECK(s.degenerate);
  for (int t = 0; t < 100; ++t) {
    const Vec u = sample_sphere(4, rng), v = sample_sphere(4, rng);
    CHECK(surrogate_target(u, v).value == -surrogate_target(-u, v).value);
  }
}

TEST_CASE("psi closed count matches the literal sum") {
  for (int a : {3, 4, 5, 11, 20}) {
    for (double x = -a - 3.0; x <= a + 3.0; x += 0.125) CHECK(psi(a, x) == psi_direct(a, x));
    // Breakpoints themselves.
    for (int k = -a - 1; k <= a + 1; ++k) CHECK(psi(a, k) == psi_direct(a, static_cast<double>(k)));
  }
}

TEST_CASE("psi on (0, 1) for odd a is -1/2 under the literal definition") {
  // H_a(x) = 1 and the alternating sum over n = 1..a is -1 there, so the
  // value is 1 - 1 - 1/2. The opposite sign would need the sum to start at +1.
  for (int a : {3, 5, 7, 11})
    for (double x : {0.1, 0.5, 0.9}) CHECK(psi(a, x) == -0.5);
  for (int a : {4, 6})
    for (double x : {0.1, 0.5, 0.9}) CHECK(psi(a, x) == 0.5);
}

TEST_CASE("psi is 2-periodic on [-a, a - 2] and odd for odd a") {
  for (int a : {3, 5, 9}) {
    for (double x = -a + 0.05; x <= a - 2.0; x += 0.1) CHECK(psi(a, x) == psi(a, x + 2.0));
    for (double x = 0.05; x < a; x += 0.1) CHECK(psi(a, -x) == -psi(a, x));
  }
  for (double x = -30.0; x <= 30.0; x += 0.37) CHECK(std::abs(psi(7, x)) <= 1.0);
}
