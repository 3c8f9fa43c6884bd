#pragma once

#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "rankattn/geometry.hpp"

namespace rankattn {

enum class Mode { softmax, hardmax };
enum class TieRule { lowest_index, error };

struct AttentionKind {
  Mode mode = Mode::softmax;
  TieRule tie_rule = TieRule::lowest_index;
};

// Layer output for query y is O V^T X w with w = softmax(temperature * X^T K Q^T y).
struct SoftmaxHead {
  Mat K, Q, V, O;
  double temperature = 1.0;

  int dim() const { return static_cast<int>(K.rows()); }
  int rank() const { return static_cast<int>(K.cols()); }
  void validate() const;
};

// Simplex-valued rule applied to the projected targets K^T X and the query.
using ScoreRule = std::function<Vec(const Mat& projected, const Vec& y)>;

struct GeneralizedHead {
  Mat K;  // d x r
  Mat V;  // d x d
  ScoreRule score_rule;
};

Vec softmax(const Vec& z);
// One-hot at the largest entry. `tie` reports whether the maximum was shared.
Vec hardmax(const Vec& z, TieRule rule = TieRule::lowest_index, bool* tie = nullptr);

// Raw scores temperature * (K^T X)^T (Q^T y), shared by attend and the
// generalized embedding of a standard head.
Vec head_scores(const Mat& projected, const Mat& Q, double temperature, const Vec& y);

Vec attention_weights(const SoftmaxHead& head, const Mat& X, const Vec& y, AttentionKind kind = {});
Mat attend(const SoftmaxHead& head, const Mat& X, const Mat& Y, AttentionKind kind = {});
// Empty head list gives the zero matrix.
Mat multihead(const std::vector<SoftmaxHead>& heads, const Mat& X, const Mat& Y, AttentionKind kind = {});

Mat generalized_attend(const GeneralizedHead& head, const Mat& X, const Mat& Y);
// Standard head written as a generalized head (V becomes O V^T).
GeneralizedHead as_generalized(const SoftmaxHead& head, AttentionKind kind = {});

// One head of a self-masked layer, M = ML * MR^T and V = VA * VB^T. Factored
// storage keeps the rank-1 heads used by the majority construction cheap.
struct MaskedHead {
  Mat ML, MR, VA, VB;

  static MaskedHead dense(const Mat& M, const Mat& V);
  static MaskedHead rank_one(const Vec& m_left, const Vec& m_right, const Vec& v_left, const Vec& v_right);
  Mat M() const { return ML * MR.transpose(); }
  Mat V() const { return VA * VB.transpose(); }
};

struct SelfMaskedLayer {
  int D = 0;
  std::vector<MaskedHead> heads;
  Mode mode = Mode::softmax;  // hardmax breaks ties to the lowest remaining index
  void validate() const;
};

// T_i(X) = x_i + sum_h V_h X~_i sm(X~_i^T M_h x_i), X~_i is X without column i.
Mat self_masked_forward(const SelfMaskedLayer& layer, const Mat& X);
// Only output column i of the layer.
Vec self_masked_column(const SelfMaskedLayer& layer, const Mat& X, int i);

struct TwoLayerPosTransformer {
  Mat E;  // d_e x N
  SelfMaskedLayer T1, T2;
  Mat A;  // d x (d + d_e)
};

// A * T2(T1([X; E]))[:, N-1].
Vec two_layer_forward(const TwoLayerPosTransformer& t, const Mat& X);

// Parameter serialization: {kind, d, r, H, heads:[{K,Q,V,O} row-major], temperature, construction}.
nlohmann::json heads_to_json(const std::vector<SoftmaxHead>& heads, const std::string& construction);
std::vector<SoftmaxHead> heads_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);

}  // namespace rankattn
