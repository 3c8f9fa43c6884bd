#include "rankattn/constructions.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rankattn/errors.hpp"

namespace rankattn {

SoftmaxHead full_rank_nearest(int d, double temperature) {
  if (d < 1) throw InvalidDimension("d must be >= 1");
  if (!(temperature > 0.0)) throw ConfigurationError("temperature must be positive");
  const Mat I = Mat::Identity(d, d);
  return SoftmaxHead{I, I, I, I, temperature};
}

SoftmaxHead full_rank_farthest(int d, double c) {
  if (d < 1) throw InvalidDimension("d must be >= 1");
  if (!(c > 0.0)) throw ConfigurationError("c must be positive");
  const Mat I = Mat::Identity(d, d);
  return SoftmaxHead{I, -I, I, I, c};
}

BiasedHead biased_full_rank(int d, const Vec& b) { return BiasedHead{full_rank_nearest(d, 1.0), b}; }

Vec biased_scores(const BiasedHead& head, const Mat& X, const Vec& y) {
  if (head.b.size() != X.cols()) throw ConfigurationError("bias length does not match target count");
  Mat P = head.base.K.transpose() * X;
  return head_scores(P, head.base.Q, 1.0, y) + head.b;
}

Vec biased_scores_concatenated(const BiasedHead& head, const Mat& X, const Vec& y) {
  if (head.b.size() != X.cols()) throw ConfigurationError("bias length does not match target count");
  const auto d = X.rows();
  Mat Xc(d + 1, X.cols());
  Xc.topRows(d) = X;
  Xc.row(d) = head.b.transpose();
  Vec yc(d + 1);
  yc.head(d) = y;
  yc[d] = 1.0;
  const Mat I = Mat::Identity(d + 1, d + 1);
  Mat P = I.transpose() * Xc;
  return head_scores(P, I, 1.0, yc);
}

Vec biased_attend(const BiasedHead& head, const Mat& X, const Vec& y, AttentionKind kind) {
  const Vec s = biased_scores(head, X, y);
  const Vec w = kind.mode == Mode::softmax ? softmax(s) : hardmax(s, kind.tie_rule);
  return X * w;
}

Mat majority_tokens(const Vec& x1, const Vec& x2, const Vec& y) {
  Mat X(x1.size(), 3);
  X.col(0) = x1;
  X.col(1) = x2;
  X.col(2) = y;
  return X;
}

namespace {

Vec unit(int D, int i) {
  Vec e = Vec::Zero(D);
  e[i] = 1.0;
  return e;
}

}  // namespace

TwoLayerPosTransformer majority_two_layer(int d, int H, const std::vector<Vec>& q_list, double alpha, double beta,
                                          Mode mode) {
  if (d < 1 || H < 1) throw InvalidDimension("need d >= 1 and H >= 1");
  if (static_cast<int>(q_list.size()) != H) throw ConfigurationError("q_list must hold H vectors");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw ConfigurationError("alpha and beta must be positive");
  const int D = d + 2;
  const int count_row = d, scratch_row = d + 1;
  TwoLayerPosTransformer t;
  t.E = Mat::Zero(2, 3);
  t.E(0, 0) = 1.0;
  t.E(0, 1) = -1.0;
  t.T1.D = D;
  t.T2.D = D;
  t.T1.mode = mode;
  t.T2.mode = mode;
  for (const auto& q : q_list) {
    if (q.size() != d || std::abs(q.norm() - 1.0) > 1e-9)
      throw ConfigurationError("every q_h must be a unit vector of length d");
    Vec qt = Vec::Zero(D);
    qt.head(d) = q;
    t.T1.heads.push_back(MaskedHead::rank_one(alpha * qt, qt, unit(D, scratch_row), unit(D, count_row)));
  }
  for (int i = 0; i < d; ++i) {
    t.T2.heads.push_back(
        MaskedHead::rank_one(alpha * unit(D, count_row), unit(D, scratch_row), beta * unit(D, i), unit(D, i)));
  }
  t.A = Mat::Zero(d, D);
  t.A.leftCols(d) = Mat::Identity(d, d) / beta;
  return t;
}

int mode_of(const std::vector<int>& votes, int N, SeededRng& rng) {
  std::vector<int> counts(static_cast<std::size_t>(N), 0);
  for (int v : votes) ++counts.at(static_cast<std::size_t>(v));
  const int best = *std::max_element(counts.begin(), counts.end());
  std::vector<int> leaders;
  for (int i = 0; i < N; ++i)
    if (counts[static_cast<std::size_t>(i)] == best) leaders.push_back(i);
  if (leaders.size() == 1) return leaders.front();
  return leaders[rng.below(leaders.size())];
}

std::vector<int> RandomHeadMajority::votes(const Mat& X, const Vec& y) const {
  std::vector<int> out;
  out.reserve(q.size());
  for (const auto& qh : q) {
    const Vec s = (X.transpose() * qh) * qh.dot(y);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < s.size(); ++i)
      if (s[i] > s[best]) best = i;
    out.push_back(static_cast<int>(best));
  }
  return out;
}

int RandomHeadMajority::select(const Mat& X, const Vec& y, SeededRng& rng) const {
  return mode_of(votes(X, y), static_cast<int>(X.cols()), rng);
}

RandomHeadMajority head_majority_from(const std::vector<Vec>& q_list) {
  RandomHeadMajority m;
  m.q = q_list;
  for (const auto& q : q_list) {
    Mat Qm = q;
    m.heads.push_back(SoftmaxHead{Qm, Qm, Qm, Qm, 1.0});
  }
  return m;
}

RandomHeadMajority random_head_majority(int d, int H, SeededRng& rng) {
  if (H < 1) throw InvalidArgument("H must be >= 1");
  std::vector<Vec> q;
  q.reserve(static_cast<std::size_t>(H));
  for (int h = 0; h < H; ++h) q.push_back(sample_sphere(d, rng));
  return head_majority_from(q);
}

Vec SparseLayer::apply(const Vec& x) const {
  if (x.size() != in_dim) throw ConfigurationError("layer input has wrong length");
  Vec out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    double s = bias[r];
    for (const auto& [idx, w] : rows[r]) s += w * x[idx];
    out[static_cast<Eigen::Index>(r)] = relu ? std::max(s, 0.0) : s;
  }
  return out;
}

Vec ModeMlp::evaluate(const Vec& input, bool* outside_precondition) const {
  if (input.size() != static_cast<Eigen::Index>(d) * (H + 2)) throw ConfigurationError("mode network input has wrong length");
  if (outside_precondition) {
    const double rho = input.segment(static_cast<Eigen::Index>(H) * d, d).dot(input.tail(d));
    *outside_precondition = rho > 0.1;
  }
  Vec h = input;
  for (const auto& layer : layers) h = layer.apply(h);
  return h;
}

double ModeMlp::square_unit(double t) const {
  const double step = 4.0 / knots;
  double s = 2.0;  // value of t^2/2 at the first knot
  for (int k = 0; k < knots; ++k) {
    const double tk = -2.0 + k * step;
    const double coef = k == 0 ? -2.0 + step / 2.0 : step;
    s += coef * std::max(t - tk, 0.0);
  }
  return s;
}

double ModeMlp::max_abs_weight() const {
  double m = 0.0;
  for (const auto& layer : layers) {
    for (const auto& row : layer.rows)
      for (const auto& e : row) m = std::max(m, std::abs(e.second));
    for (double b : layer.bias) m = std::max(m, std::abs(b));
  }
  return m;
}

std::vector<std::size_t> ModeMlp::widths() const {
  std::vector<std::size_t> w;
  for (const auto& layer : layers) w.push_back(layer.rows.size());
  return w;
}

ModeMlp mode_mlp_construction(int d, int H, double eps) {
  if (d < 1 || H < 1) throw InvalidDimension("need d >= 1 and H >= 1");
  if (!(eps > 0.0 && eps < 0.5)) throw ConfigurationError("eps must lie in (0, 1/2)");
  ModeMlp net;
  net.d = d;
  net.H = H;
  net.knots = static_cast<int>(std::ceil(32.0 * d / eps));
  const int K = net.knots;
  const double step = 4.0 / K;
  const int in_dim = d * (H + 2);
  const int xhat_off = H * d, x_off = (H + 1) * d;

  // Layer 1: ReLU(v_hi + c_i - t_k) for both candidates c, then sign-split copies of x and x_hat.
  SparseLayer l1;
  l1.in_dim = in_dim;
  auto hinge_index = [&](int side, int h, int i, int k) { return ((side * H + h) * d + i) * K + k; };
  const int hinge_count = 2 * H * d * K;
  l1.rows.resize(static_cast<std::size_t>(hinge_count + 4 * d));
  l1.bias.resize(l1.rows.size());
  for (int side = 0; side < 2; ++side) {
    const int cand = side == 0 ? x_off : xhat_off;
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < K; ++k) {
          const auto r = static_cast<std::size_t>(hinge_index(side, h, i, k));
          l1.rows[r] = {{h * d + i, 1.0}, {cand + i, 1.0}};
          l1.bias[r] = -(-2.0 + k * step);
        }
  }
  // Copies: [x+ , x-, xhat+, xhat-] blocks of d.
  for (int i = 0; i < d; ++i) {
    const auto base = static_cast<std::size_t>(hinge_count);
    l1.rows[base + i] = {{x_off + i, 1.0}};
    l1.rows[base + d + i] = {{x_off + i, -1.0}};
    l1.rows[base + 2 * d + i] = {{xhat_off + i, 1.0}};
    l1.rows[base + 3 * d + i] = {{xhat_off + i, -1.0}};
  }

  // Layer 2: D = sum sq(v + x) - sum sq(v + x_hat) = sum_h <v_h, x> - <v_h, x_hat> for unit candidates.
  // p = ReLU(D + 1/2), m = ReLU(D - 1/2), so p - m clips D + 1/2 to [0, 1].
  SparseLayer l2;
  l2.in_dim = static_cast<int>(l1.rows.size());
  std::vector<std::pair<int, double>> diff;
  diff.reserve(static_cast<std::size_t>(hinge_count));
  for (int side = 0; side < 2; ++side) {
    const double sgn = side == 0 ? 1.0 : -1.0;
    for (int h = 0; h < H; ++h)
      for (int i = 0; i < d; ++i)
        for (int k = 0; k < K; ++k) {
          const double coef = k == 0 ? -2.0 + step / 2.0 : step;
          diff.emplace_back(hinge_index(side, h, i, k), sgn * coef);
        }
  }
  l2.rows.push_back(diff);
  l2.bias.push_back(0.5);
  l2.rows.push_back(std::move(diff));
  l2.bias.push_back(-0.5);
  for (int j = 0; j < 4 * d; ++j) {
    l2.rows.push_back({{hinge_count + j, 1.0}});
    l2.bias.push_back(0.0);
  }

  // Layer 3: gate each candidate by b = p - m (B = 1 bounds |coordinates| <= 1).
  const double B = 1.0;
  SparseLayer l3;
  l3.in_dim = static_cast<int>(l2.rows.size());
  const int P = 0, M = 1, xp = 2, xm = 2 + d, hp = 2 + 2 * d, hm = 2 + 3 * d;
  for (int i = 0; i < d; ++i) {
    l3.rows.push_back({{xp + i, 1.0}, {xm + i, -1.0}, {P, B}, {M, -B}});
    l3.bias.push_back(-B);
    l3.rows.push_back({{xp + i, -1.0}, {xm + i, 1.0}, {P, B}, {M, -B}});
    l3.bias.push_back(-B);
    l3.rows.push_back({{hp + i, 1.0}, {hm + i, -1.0}, {P, -B}, {M, B}});
    l3.bias.push_back(0.0);
    l3.rows.push_back({{hp + i, -1.0}, {hm + i, 1.0}, {P, -B}, {M, B}});
    l3.bias.push_back(0.0);
  }

  // Layer 4: out_i = n1 - n2 + n3 - n4.
  SparseLayer l4;
  l4.in_dim = static_cast<int>(l3.rows.size());
  l4.relu = false;
  for (int i = 0; i < d; ++i) {
    l4.rows.push_back({{4 * i, 1.0}, {4 * i + 1, -1.0}, {4 * i + 2, 1.0}, {4 * i + 3, -1.0}});
    l4.bias.push_back(0.0);
  }

  net.layers = {std::move(l1), std::move(l2), std::move(l3), std::move(l4)};
  return net;
}

Vec mode_mlp_input(const std::vector<Vec>& votes, const Vec& x_hat, const Vec& x) {
  const auto d = x.size();
  Vec in(d * static_cast<Eigen::Index>(votes.size() + 2));
  Eigen::Index off = 0;
  for (const auto& v : votes) {
    if (v.size() != d) throw ConfigurationError("vote has wrong length");
    in.segment(off, d) = v;
    off += d;
  }
  in.segment(off, d) = x_hat;
  in.segment(off + d, d) = x;
  return in;
}

Vec ModeMlpPipeline::evaluate(const Mat& X, const Vec& y) const {
  auto weights = [&](const Vec& s) { return temperature > 0.0 ? softmax(temperature * s) : hardmax(s); };
  std::vector<Vec> votes;
  votes.reserve(q.size());
  for (const auto& qh : q) {
    const Vec s = (X.transpose() * qh) * qh.dot(y);
    votes.push_back(X * weights(s));
  }
  const Vec s0 = X.transpose() * q0;
  const Vec x = X * weights(s0);
  const Vec x_hat = X * weights(-s0);
  return mlp.evaluate(mode_mlp_input(votes, x_hat, x));
}

ModeMlpPipeline mode_mlp_pipeline(int d, int H, double eps, double temperature, SeededRng& rng) {
  ModeMlpPipeline p;
  p.mlp = mode_mlp_construction(d, H, eps);
  for (int h = 0; h < H; ++h) p.q.push_back(sample_sphere(d, rng));
  p.q0 = sample_sphere(d, rng);
  p.temperature = temperature;
  return p;
}

}  // namespace rankattn
