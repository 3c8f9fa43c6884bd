#include "rankattn/attention.hpp"

#include <cmath>
#include <string>

#include "rankattn/errors.hpp"

namespace rankattn {

void SoftmaxHead::validate() const {
  const auto d = K.rows(), r = K.cols();
  if (Q.rows() != d || V.rows() != d || O.rows() != d || Q.cols() != r || V.cols() != r || O.cols() != r)
    throw ConfigurationError("head matrices K, Q, V, O must share shape d x r");
  if (r > d) throw ConfigurationError("head rank exceeds dimension");
  if (!(temperature > 0.0)) throw ConfigurationError("temperature must be positive");
}

Vec softmax(const Vec& z) {
  if (z.size() == 0) throw EmptyContextError("softmax over empty context");
  const double m = z.maxCoeff();
  Vec w = (z.array() - m).exp();
  return w / w.sum();
}

Vec hardmax(const Vec& z, TieRule rule, bool* tie) {
  if (z.size() == 0) throw EmptyContextError("hardmax over empty context");
  Eigen::Index best = 0;
  bool shared = false;
  for (Eigen::Index i = 1; i < z.size(); ++i) {
    if (z[i] > z[best]) {
      best = i;
      shared = false;
    } else if (z[i] == z[best]) {
      shared = true;
    }
  }
  if (shared && rule == TieRule::error) throw TieError("hardmax tie at the maximum score");
  if (tie) *tie = shared;
  Vec w = Vec::Zero(z.size());
  w[best] = 1.0;
  return w;
}

Vec head_scores(const Mat& projected, const Mat& Q, double temperature, const Vec& y) {
  Vec qy = Q.transpose() * y;
  Vec s = projected.transpose() * qy;
  return temperature * s;
}

namespace {

Vec weights_from_scores(const Vec& s, AttentionKind kind) {
  return kind.mode == Mode::softmax ? softmax(s) : hardmax(s, kind.tie_rule);
}

void check_context(const Mat& X, const Mat& Y, int d) {
  if (X.cols() == 0) throw EmptyContextError("attention needs at least one target point");
  if (X.rows() != d || Y.rows() != d) throw ConfigurationError("input dimension does not match head");
}

}  // namespace

Vec attention_weights(const SoftmaxHead& head, const Mat& X, const Vec& y, AttentionKind kind) {
  check_context(X, y, head.dim());
  Mat P = head.K.transpose() * X;
  return weights_from_scores(head_scores(P, head.Q, head.temperature, y), kind);
}

Mat attend(const SoftmaxHead& head, const Mat& X, const Mat& Y, AttentionKind kind) {
  head.validate();
  check_context(X, Y, head.dim());
  Mat P = head.K.transpose() * X;
  Mat value_map = head.O * head.V.transpose();
  Mat out(head.dim(), Y.cols());
  for (Eigen::Index m = 0; m < Y.cols(); ++m) {
    Vec w = weights_from_scores(head_scores(P, head.Q, head.temperature, Y.col(m)), kind);
    Vec xw = X * w;
    out.col(m) = value_map * xw;
  }
  return out;
}

Mat multihead(const std::vector<SoftmaxHead>& heads, const Mat& X, const Mat& Y, AttentionKind kind) {
  Mat out = Mat::Zero(Y.rows(), Y.cols());
  for (const auto& h : heads) out += attend(h, X, Y, kind);
  return out;
}

Mat generalized_attend(const GeneralizedHead& head, const Mat& X, const Mat& Y) {
  if (X.cols() == 0) throw EmptyContextError("attention needs at least one target point");
  if (head.K.rows() != X.rows() || head.V.cols() != X.rows())
    throw ConfigurationError("input dimension does not match generalized head");
  Mat P = head.K.transpose() * X;
  Mat out(head.V.rows(), Y.cols());
  for (Eigen::Index m = 0; m < Y.cols(); ++m) {
    Vec w = head.score_rule(P, Y.col(m));
    if (w.size() != X.cols()) throw ContractViolation("score rule returned wrong length");
    const double total = w.sum();
    if (!(w.minCoeff() >= -1e-9) || !(std::abs(total - 1.0) <= 1e-9))
      throw ContractViolation("score rule output is not on the simplex (sum " + std::to_string(total) + ")");
    Vec xw = X * w;
    out.col(m) = head.V * xw;
  }
  return out;
}

GeneralizedHead as_generalized(const SoftmaxHead& head, AttentionKind kind) {
  head.validate();
  GeneralizedHead g;
  g.K = head.K;
  g.V = head.O * head.V.transpose();
  Mat Q = head.Q;
  double temperature = head.temperature;
  g.score_rule = [Q, temperature, kind](const Mat& P, const Vec& y) {
    return weights_from_scores(head_scores(P, Q, temperature, y), kind);
  };
  return g;
}

MaskedHead MaskedHead::dense(const Mat& M, const Mat& V) {
  const auto D = M.rows();
  if (M.cols() != D || V.rows() != D || V.cols() != D) throw ConfigurationError("masked head matrices must be D x D");
  return MaskedHead{M, Mat::Identity(D, D), V, Mat::Identity(D, D)};
}

MaskedHead MaskedHead::rank_one(const Vec& m_left, const Vec& m_right, const Vec& v_left, const Vec& v_right) {
  return MaskedHead{m_left, m_right, v_left, v_right};
}

void SelfMaskedLayer::validate() const {
  for (const auto& h : heads) {
    if (h.ML.rows() != D || h.MR.rows() != D || h.VA.rows() != D || h.VB.rows() != D ||
        h.ML.cols() != h.MR.cols() || h.VA.cols() != h.VB.cols())
      throw ConfigurationError("self-masked head does not match layer dimension " + std::to_string(D));
  }
}

namespace {

struct MaskedCache {
  std::vector<Mat> left, right;  // ML^T X and MR^T X per head
};

MaskedCache masked_cache(const SelfMaskedLayer& layer, const Mat& X) {
  MaskedCache c;
  c.left.reserve(layer.heads.size());
  c.right.reserve(layer.heads.size());
  for (const auto& h : layer.heads) {
    c.left.push_back(h.ML.transpose() * X);
    c.right.push_back(h.MR.transpose() * X);
  }
  return c;
}

Vec masked_column(const SelfMaskedLayer& layer, const MaskedCache& c, const Mat& X, int i) {
  const int N = static_cast<int>(X.cols());
  Vec out = X.col(i);
  Vec s(N - 1);
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const auto& head = layer.heads[h];
    for (int j = 0, k = 0; j < N; ++j) {
      if (j == i) continue;
      s[k++] = c.left[h].col(j).dot(c.right[h].col(i));
    }
    Vec w = layer.mode == Mode::softmax ? softmax(s) : hardmax(s);
    Vec xw = Vec::Zero(X.rows());
    for (int j = 0, k = 0; j < N; ++j) {
      if (j == i) continue;
      xw += w[k++] * X.col(j);
    }
    out += head.VA * (head.VB.transpose() * xw);
  }
  return out;
}

void check_masked_input(const SelfMaskedLayer& layer, const Mat& X) {
  layer.validate();
  if (X.rows() != layer.D) throw ConfigurationError("input rows do not match layer dimension");
  if (X.cols() < 2) throw EmptyContextError("self-masked layer needs N >= 2");
}

}  // namespace

Mat self_masked_forward(const SelfMaskedLayer& layer, const Mat& X) {
  check_masked_input(layer, X);
  MaskedCache c = masked_cache(layer, X);
  Mat out(X.rows(), X.cols());
  for (int i = 0; i < X.cols(); ++i) out.col(i) = masked_column(layer, c, X, i);
  return out;
}

Vec self_masked_column(const SelfMaskedLayer& layer, const Mat& X, int i) {
  check_masked_input(layer, X);
  if (i < 0 || i >= X.cols()) throw ConfigurationError("column index out of range");
  return masked_column(layer, masked_cache(layer, X), X, i);
}

Vec two_layer_forward(const TwoLayerPosTransformer& t, const Mat& X) {
  if (X.cols() != t.E.cols())
    throw ConfigurationError("input has " + std::to_string(X.cols()) + " columns, encodings have " +
                             std::to_string(t.E.cols()));
  const auto d = X.rows(), de = t.E.rows();
  if (t.T1.D != d + de || t.T2.D != d + de || t.A.cols() != d + de)
    throw ConfigurationError("layer dimensions must equal d + d_e");
  Mat Z(d + de, X.cols());
  Z.topRows(d) = X;
  Z.bottomRows(de) = t.E;
  Mat Z1 = self_masked_forward(t.T1, Z);
  Vec last = self_masked_column(t.T2, Z1, static_cast<int>(X.cols()) - 1);
  return t.A * last;
}

nlohmann::json matrix_to_json(const Mat& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Mat matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw ConfigurationError("matrix data length mismatch");
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

nlohmann::json heads_to_json(const std::vector<SoftmaxHead>& heads, const std::string& construction) {
  nlohmann::json j;
  j["kind"] = "softmax_multihead";
  j["d"] = heads.empty() ? 0 : heads.front().dim();
  j["r"] = heads.empty() ? 0 : heads.front().rank();
  j["H"] = heads.size();
  j["temperature"] = heads.empty() ? 1.0 : heads.front().temperature;
  j["construction"] = construction;
  j["heads"] = nlohmann::json::array();
  for (const auto& h : heads) {
    j["heads"].push_back({{"K", matrix_to_json(h.K)},
                          {"Q", matrix_to_json(h.Q)},
                          {"V", matrix_to_json(h.V)},
                          {"O", matrix_to_json(h.O)},
                          {"temperature", h.temperature}});
  }
  return j;
}

std::vector<SoftmaxHead> heads_from_json(const nlohmann::json& j) {
  std::vector<SoftmaxHead> heads;
  for (const auto& h : j.at("heads")) {
    SoftmaxHead s{matrix_from_json(h.at("K")), matrix_from_json(h.at("Q")), matrix_from_json(h.at("V")),
                  matrix_from_json(h.at("O")), h.value("temperature", j.value("temperature", 1.0))};
    s.validate();
    heads.push_back(std::move(s));
  }
  return heads;
}

}  // namespace rankattn
