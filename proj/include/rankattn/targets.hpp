#pragma once

#include <vector>

#include "rankattn/geometry.hpp"

namespace rankattn {

// Index plus a flag set when the optimum was shared and broken to the lowest index.
struct Selection {
  int index = 0;
  bool tie = false;
};

Selection nearest_index(const Mat& X, const Vec& y);
Vec nearest_neighbor(const Mat& X, const Vec& y);

// argmin_i ||x_i - y||^2 + b_i.
Selection biased_nearest_index(const Mat& X, const Vec& y, const Vec& b);
Vec biased_nearest_neighbor(const Mat& X, const Vec& y, const Vec& b);
// argmax_i <x_i, y> + b_i.
Selection biased_argmax_index(const Mat& X, const Vec& y, const Vec& b);
Vec biased_argmax_neighbor(const Mat& X, const Vec& y, const Vec& b);

// Index of the farthest other column, for each column.
std::vector<int> farthest_indices(const Mat& X);
Mat farthest_neighbor_selfattn(const Mat& X);

struct SignValue {
  int value = 1;
  bool degenerate = false;  // x^T y == 0, reported as +1
};
SignValue surrogate_target(const Vec& x, const Vec& y);

// psi_a(x) = H_a(x) + sum_{n=1}^{2a} (-1)^n H_{a-n}(x) - 1/2 with H_b(x) = 1(x + b >= 0).
double psi(int a, double x);
// Term-by-term evaluation of the same sum; used as a reference.
double psi_direct(int a, double x);

}  // namespace rankattn
