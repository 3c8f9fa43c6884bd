#pragma once

#include <utility>
#include <vector>

#include "rankattn/attention.hpp"

namespace rankattn {

// K = Q = V = O = I; scores are temperature * X^T y.
SoftmaxHead full_rank_nearest(int d, double temperature);
// K = I, Q = -I, V = O = I; scores are -c X^T y. Used as self-attention.
SoftmaxHead full_rank_farthest(int d, double c);

struct BiasedHead {
  SoftmaxHead base;  // full-rank identity head
  Vec b;
};

BiasedHead biased_full_rank(int d, const Vec& b);
// X^T y + b.
Vec biased_scores(const BiasedHead& head, const Mat& X, const Vec& y);
// Same scores from the concatenated form [X; b^T]^T [y; 1] with KQ^T = I_{d+1}.
Vec biased_scores_concatenated(const BiasedHead& head, const Mat& X, const Vec& y);
Vec biased_attend(const BiasedHead& head, const Mat& X, const Vec& y, AttentionKind kind = {Mode::hardmax});

// Tokens are the columns of [x1 x2 y].
Mat majority_tokens(const Vec& x1, const Vec& x2, const Vec& y);
// Layer-2 scores are also scaled by alpha so that both layers act as hardmax.
// mode = hardmax replaces both softmax layers by their exact limit.
TwoLayerPosTransformer majority_two_layer(int d, int H, const std::vector<Vec>& q_list, double alpha, double beta,
                                          Mode mode = Mode::softmax);

struct RandomHeadMajority {
  std::vector<Vec> q;
  std::vector<SoftmaxHead> heads;  // rank 1, K = Q = V = O = q

  // Index chosen by each head: argmax_i <x_i, q_h><y, q_h>.
  std::vector<int> votes(const Mat& X, const Vec& y) const;
  // Exact mode of the votes; ties are broken uniformly with rng.
  int select(const Mat& X, const Vec& y, SeededRng& rng) const;
};

RandomHeadMajority random_head_majority(int d, int H, SeededRng& rng);
RandomHeadMajority head_majority_from(const std::vector<Vec>& q_list);
int mode_of(const std::vector<int>& votes, int N, SeededRng& rng);

struct SparseLayer {
  int in_dim = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;
  std::vector<double> bias;
  bool relu = true;

  Vec apply(const Vec& x) const;
};

// Four-layer ReLU network g: R^{d(H+2)} -> R^d. The input holds H vote
// vectors followed by the candidates x_hat and x; the output is whichever
// candidate the votes favour.
struct ModeMlp {
  int d = 0;
  int H = 0;
  int knots = 0;  // linear pieces of the t^2/2 unit on [-2, 2]
  std::vector<SparseLayer> layers;

  Vec evaluate(const Vec& input, bool* outside_precondition = nullptr) const;
  // Piecewise-linear unit the network uses for t^2/2 (up to a constant).
  double square_unit(double t) const;
  double max_abs_weight() const;
  std::vector<std::size_t> widths() const;
};

ModeMlp mode_mlp_construction(int d, int H, double eps);
Vec mode_mlp_input(const std::vector<Vec>& votes, const Vec& x_hat, const Vec& x);

// Attention front end feeding the mode network: H rank-1 voting heads with
// queries q_list, plus two heads scoring <x_i, q0> and -<x_i, q0> that supply
// the candidates. temperature <= 0 selects exact hardmax.
struct ModeMlpPipeline {
  ModeMlp mlp;
  std::vector<Vec> q;
  Vec q0;
  double temperature = 1e3;

  Vec evaluate(const Mat& X, const Vec& y) const;
};

ModeMlpPipeline mode_mlp_pipeline(int d, int H, double eps, double temperature, SeededRng& rng);

}  // namespace rankattn
