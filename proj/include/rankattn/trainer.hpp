#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "rankattn/exec.hpp"
#include "rankattn/geometry.hpp"
#include "rankattn/montecarlo.hpp"

namespace rankattn {

struct TrainConfig {
  int d = 16;
  int N = 4;
  int r = 16;
  int H = 1;
  int L = 1;
  std::string target = "farthest_selfattn";  // or "nearest"
  long steps = 20000;
  int batch = 64;
  double lr = 0.01;
  std::string schedule = "cosine";  // "constant" or "cosine" (linear warmup, then cosine decay)
  long warmup_steps = 1000;
  std::string optimizer = "adamw";  // "adamw" or "sgd"
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  double init_scale = 1.0;
  bool rmsnorm = false;  // applied after each attention sublayer
  double rms_eps = 1e-6;
  std::string positional = "none";  // "none", "additive" or "concatenated"
  int d_e = 0;                      // width of concatenated encodings
  bool residual = false;
  bool self_mask = false;  // exclude each token from its own attention
  long log_every = 100;
  int monitor_batch = 256;  // fixed batch on which the logged loss is measured
  long eval_samples = 10000;
  double divergence_threshold = 1e6;

  void validate() const;
  bool self_attention() const { return target == "farthest_selfattn"; }
  int model_dim() const { return d + (positional == "concatenated" ? d_e : 0); }
};

inline constexpr int kConfigSchemaVersion = 1;
nlohmann::json config_to_json(const TrainConfig& cfg);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig config_from_json(const nlohmann::json& j);

struct Batch {
  std::vector<PointConfiguration> inputs;
  std::vector<Mat> targets;
};

Batch make_batch(const TrainConfig& cfg, int size, SeededRng& rng);
Mat target_for(const TrainConfig& cfg, const PointConfiguration& p);

class AttentionModel {
 public:
  explicit AttentionModel(const TrainConfig& cfg);

  // Weights ~ N(0, (init_scale / sqrt(d))^2); RMSNorm gains start at 1.
  void init(SeededRng& rng);

  const TrainConfig& config() const { return cfg_; }
  std::vector<double>& params() { return theta_; }
  const std::vector<double>& params() const { return theta_; }
  std::size_t attention_params_per_layer() const;

  enum class Part { K, Q, V, O };
  Eigen::Map<Mat> weight(int layer, int head, Part part);
  Eigen::Map<const Mat> weight(int layer, int head, Part part) const;
  Eigen::Map<Vec> gain(int layer);
  Eigen::Map<Mat> encoding();

  // d x N outputs for self-attention, d x 1 for the nearest target.
  Mat forward(const PointConfiguration& p) const;
  double sample_loss(const PointConfiguration& p, const Mat& target) const;
  // Mean over samples of the per-sample loss (mean over output tokens of squared error).
  double loss(const Batch& batch) const;
  // Returns the loss and writes the gradient of the mean loss into grad.
  double loss_and_grad(const Batch& batch, std::vector<double>& grad, Exec exec = Exec::serial) const;

 private:
  struct Layout;
  std::size_t head_offset(int layer, int head) const;
  std::size_t gain_offset(int layer) const;
  std::size_t encoding_offset() const;
  int encoding_rows() const;
  int encoding_cols() const;
  double sample_loss_grad(const PointConfiguration& p, const Mat& target, double* grad) const;

  TrainConfig cfg_;
  int D_;
  std::vector<double> theta_;
};

struct AdamState {
  std::vector<double> m, v;
  long t = 0;
};

void adamw_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& state, double lr,
                double beta1, double beta2, double eps, double weight_decay);
void sgd_step(std::vector<double>& theta, const std::vector<double>& grad, double lr, double weight_decay);
double scheduled_lr(const TrainConfig& cfg, long step);

struct KqDiagnostic {
  int layer = 0;
  int head = 0;
  double angle = 0.0;  // radians, Frobenius angle between KQ^T and I
  double norm = 0.0;
  bool angle_defined = true;
};

// Frobenius angle and norm of a square matrix against the identity.
KqDiagnostic kq_angle(const Mat& KQt);
// Only heads with r equal to the model width are reported.
std::vector<KqDiagnostic> kq_diagnostics(const AttentionModel& model);

struct TrainReport {
  TrainConfig config;
  std::vector<std::pair<long, double>> loss_curve;  // (step, loss on the monitor batch)
  std::vector<std::pair<long, double>> batch_curve;
  McEstimate final_eval;
  std::vector<KqDiagnostic> kq;
  bool diverged = false;
  long steps_completed = 0;
  std::string stop_reason = "completed";
};

TrainReport train(const TrainConfig& cfg, AttentionModel* trained = nullptr, Exec exec = Exec::serial);
nlohmann::json report_to_json(const TrainReport& report);

}  // namespace rankattn
