#include "rankattn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <numbers>
#include <set>
#include <string>

#include <omp.h>

#include "rankattn/errors.hpp"
#include "rankattn/targets.hpp"

namespace rankattn {

void TrainConfig::validate() const {
  if (d < 1 || N < 1 || r < 1 || H < 1 || L < 1) throw ConfigurationError("d, N, r, H, L must be >= 1");
  if (target != "nearest" && target != "farthest_selfattn")
    throw ConfigurationError("target must be 'nearest' or 'farthest_selfattn'");
  if (positional != "none" && positional != "additive" && positional != "concatenated")
    throw ConfigurationError("positional must be 'none', 'additive' or 'concatenated'");
  if (positional == "concatenated" && d_e < 1) throw ConfigurationError("concatenated encodings need d_e >= 1");
  if (r > model_dim()) throw ConfigurationError("r must not exceed the model width");
  if (target == "nearest" && N > d) throw ConfigurationError("nearest target samples orthogonal targets, needs N <= d");
  if (self_attention() && N < 2) throw ConfigurationError("self-attention target needs N >= 2");
  if (self_attention() && self_mask && N < 2) throw ConfigurationError("masked self-attention needs N >= 2");
  if (steps < 0 || batch < 1 || monitor_batch < 1) throw ConfigurationError("steps >= 0, batch >= 1 required");
  if (!(lr >= 0.0)) throw ConfigurationError("lr must be >= 0");
  if (schedule != "constant" && schedule != "cosine") throw ConfigurationError("schedule must be 'constant' or 'cosine'");
  if (warmup_steps < 0 || warmup_steps > steps) throw ConfigurationError("warmup_steps must lie in [0, steps]");
  if (optimizer != "adamw" && optimizer != "sgd") throw ConfigurationError("optimizer must be 'adamw' or 'sgd'");
  if (!(init_scale >= 0.0)) throw ConfigurationError("init_scale must be >= 0");
  if (log_every < 1) throw ConfigurationError("log_every must be >= 1");
  if (eval_samples < 2) throw ConfigurationError("eval_samples must be >= 2");
}

nlohmann::json config_to_json(const TrainConfig& c) {
  return {{"schema_version", kConfigSchemaVersion},
          {"d", c.d},
          {"N", c.N},
          {"r", c.r},
          {"H", c.H},
          {"L", c.L},
          {"target", c.target},
          {"steps", c.steps},
          {"batch", c.batch},
          {"lr", c.lr},
          {"schedule", c.schedule},
          {"warmup_steps", c.warmup_steps},
          {"optimizer", c.optimizer},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"weight_decay", c.weight_decay},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed},
          {"init_scale", c.init_scale},
          {"rmsnorm", c.rmsnorm},
          {"rms_eps", c.rms_eps},
          {"positional", c.positional},
          {"d_e", c.d_e},
          {"residual", c.residual},
          {"self_mask", c.self_mask},
          {"log_every", c.log_every},
          {"monitor_batch", c.monitor_batch},
          {"eval_samples", c.eval_samples},
          {"divergence_threshold", c.divergence_threshold}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigurationError("config must be a JSON object");
  TrainConfig c;
  const auto known = config_to_json(c);
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw ConfigurationError("unknown config key '" + key + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  try {
    if (j.contains("schema_version") && j.at("schema_version").get<int>() != kConfigSchemaVersion)
      throw ConfigurationError("unsupported config schema_version");
    get("d", c.d);
    get("N", c.N);
    get("r", c.r);
    get("H", c.H);
    get("L", c.L);
    get("target", c.target);
    get("steps", c.steps);
    get("batch", c.batch);
    get("lr", c.lr);
    get("schedule", c.schedule);
    get("warmup_steps", c.warmup_steps);
    get("optimizer", c.optimizer);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("weight_decay", c.weight_decay);
    get("adam_eps", c.adam_eps);
    get("seed", c.seed);
    get("init_scale", c.init_scale);
    get("rmsnorm", c.rmsnorm);
    get("rms_eps", c.rms_eps);
    get("positional", c.positional);
    get("d_e", c.d_e);
    get("residual", c.residual);
    get("self_mask", c.self_mask);
    get("log_every", c.log_every);
    get("monitor_batch", c.monitor_batch);
    get("eval_samples", c.eval_samples);
    get("divergence_threshold", c.divergence_threshold);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigurationError(std::string("bad config value: ") + e.what());
  }
  c.validate();
  return c;
}

Mat target_for(const TrainConfig& cfg, const PointConfiguration& p) {
  if (cfg.self_attention()) return farthest_neighbor_selfattn(p.X);
  return nearest_neighbor(p.X, p.y);
}

Batch make_batch(const TrainConfig& cfg, int size, SeededRng& rng) {
  Batch b;
  b.inputs.reserve(static_cast<std::size_t>(size));
  b.targets.reserve(static_cast<std::size_t>(size));
  for (int s = 0; s < size; ++s) {
    PointConfiguration p;
    if (cfg.self_attention()) {
      p.X = sample_sphere_columns(cfg.d, cfg.N, rng);
      p.y = Vec::Zero(cfg.d);
    } else {
      p.X = sample_orthonormal_sequence(cfg.d, cfg.N, rng);
      p.y = sample_sphere(cfg.d, rng);
    }
    b.targets.push_back(target_for(cfg, p));
    b.inputs.push_back(std::move(p));
  }
  return b;
}

AttentionModel::AttentionModel(const TrainConfig& cfg) : cfg_(cfg), D_(cfg.model_dim()) {
  cfg_.validate();
  theta_.assign(encoding_offset() + static_cast<std::size_t>(encoding_rows()) * encoding_cols(), 0.0);
  if (cfg_.rmsnorm)
    for (int l = 0; l < cfg_.L; ++l) gain(l).setOnes();
}

std::size_t AttentionModel::attention_params_per_layer() const {
  return 4u * static_cast<std::size_t>(D_) * cfg_.r * cfg_.H;
}

std::size_t AttentionModel::head_offset(int layer, int head) const {
  const std::size_t block = static_cast<std::size_t>(D_) * cfg_.r;
  return (static_cast<std::size_t>(layer) * cfg_.H + head) * 4 * block;
}

std::size_t AttentionModel::gain_offset(int layer) const {
  return static_cast<std::size_t>(cfg_.L) * attention_params_per_layer() + static_cast<std::size_t>(layer) * D_;
}

std::size_t AttentionModel::encoding_offset() const {
  return static_cast<std::size_t>(cfg_.L) * attention_params_per_layer() +
         (cfg_.rmsnorm ? static_cast<std::size_t>(cfg_.L) * D_ : 0);
}

int AttentionModel::encoding_rows() const {
  if (cfg_.positional == "additive") return cfg_.d;
  if (cfg_.positional == "concatenated") return cfg_.d_e;
  return 0;
}

int AttentionModel::encoding_cols() const { return cfg_.self_attention() ? cfg_.N : cfg_.N + 1; }

Eigen::Map<Mat> AttentionModel::weight(int layer, int head, Part part) {
  const std::size_t off = head_offset(layer, head) + static_cast<std::size_t>(part) * D_ * cfg_.r;
  return Eigen::Map<Mat>(theta_.data() + off, D_, cfg_.r);
}

Eigen::Map<const Mat> AttentionModel::weight(int layer, int head, Part part) const {
  const std::size_t off = head_offset(layer, head) + static_cast<std::size_t>(part) * D_ * cfg_.r;
  return Eigen::Map<const Mat>(theta_.data() + off, D_, cfg_.r);
}

Eigen::Map<Vec> AttentionModel::gain(int layer) {
  if (!cfg_.rmsnorm) throw ConfigurationError("model has no RMSNorm gains");
  return Eigen::Map<Vec>(theta_.data() + gain_offset(layer), D_);
}

Eigen::Map<Mat> AttentionModel::encoding() {
  return Eigen::Map<Mat>(theta_.data() + encoding_offset(), encoding_rows(), encoding_cols());
}

void AttentionModel::init(SeededRng& rng) {
  const double sd = cfg_.init_scale / std::sqrt(static_cast<double>(cfg_.d));
  const std::size_t attn = static_cast<std::size_t>(cfg_.L) * attention_params_per_layer();
  for (std::size_t i = 0; i < attn; ++i) theta_[i] = sd * rng.normal();
  if (cfg_.rmsnorm)
    for (int l = 0; l < cfg_.L; ++l) gain(l).setOnes();
  for (std::size_t i = encoding_offset(); i < theta_.size(); ++i) theta_[i] = sd * rng.normal();
}

namespace {

struct HeadCache {
  Mat P, Qs, W, U, Vu;
};

struct LayerCache {
  Mat keys, queries;  // inputs; identical for self-attention
  std::vector<HeadCache> heads;
  Mat pre;  // residual stream before normalization
  Vec rms;
};

// Column-wise softmax; with `mask`, entry (i, i) is excluded.
Mat column_softmax(const Mat& S, bool mask) {
  Mat W(S.rows(), S.cols());
  for (Eigen::Index c = 0; c < S.cols(); ++c) {
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < S.rows(); ++r)
      if (!(mask && r == c)) m = std::max(m, S(r, c));
    double total = 0.0;
    for (Eigen::Index r = 0; r < S.rows(); ++r) {
      const double e = (mask && r == c) ? 0.0 : std::exp(S(r, c) - m);
      W(r, c) = e;
      total += e;
    }
    W.col(c) /= total;
  }
  return W;
}

}  // namespace

struct AttentionModel::Layout {
  // Per-sample forward with every intermediate kept for the backward pass.
  struct Trace {
    Mat context;  // nearest target: embedded targets (keys of every layer)
    std::vector<LayerCache> layers;
    Mat final_state;
  };

  static Mat embed_tokens(const AttentionModel& m, const Mat& X, int first_col) {
    const auto& cfg = m.cfg_;
    const int n = static_cast<int>(X.cols());
    if (cfg.positional == "none") return X;
    Eigen::Map<const Mat> E(m.theta_.data() + m.encoding_offset(), m.encoding_rows(), m.encoding_cols());
    if (cfg.positional == "additive") return X + E.middleCols(first_col, n);
    Mat Z(m.D_, n);
    Z.topRows(cfg.d) = X;
    Z.bottomRows(cfg.d_e) = E.middleCols(first_col, n);
    return Z;
  }

  static Mat layer_forward(const AttentionModel& m, int l, const Mat& keys, const Mat& queries, LayerCache& c) {
    const auto& cfg = m.cfg_;
    const bool mask = cfg.self_attention() && cfg.self_mask;
    c.keys = keys;
    c.queries = queries;
    c.heads.resize(static_cast<std::size_t>(cfg.H));
    Mat A = Mat::Zero(m.D_, queries.cols());
    for (int h = 0; h < cfg.H; ++h) {
      auto& hc = c.heads[static_cast<std::size_t>(h)];
      auto K = m.weight(l, h, Part::K);
      auto Q = m.weight(l, h, Part::Q);
      auto V = m.weight(l, h, Part::V);
      auto O = m.weight(l, h, Part::O);
      hc.P = K.transpose() * keys;
      hc.Qs = Q.transpose() * queries;
      hc.W = column_softmax(hc.P.transpose() * hc.Qs, mask);
      hc.U = keys * hc.W;
      hc.Vu = V.transpose() * hc.U;
      A.noalias() += O * hc.Vu;
    }
    c.pre = cfg.residual ? Mat(queries + A) : A;
    if (!cfg.rmsnorm) return c.pre;
    Eigen::Map<const Vec> g(m.theta_.data() + m.gain_offset(l), m.D_);
    c.rms = ((c.pre.colwise().squaredNorm().array() / m.D_) + cfg.rms_eps).sqrt().transpose();
    Mat out(c.pre.rows(), c.pre.cols());
    for (Eigen::Index j = 0; j < c.pre.cols(); ++j) out.col(j) = g.cwiseProduct(c.pre.col(j)) / c.rms[j];
    return out;
  }

  static Trace forward(const AttentionModel& m, const PointConfiguration& p) {
    const auto& cfg = m.cfg_;
    Trace t;
    t.layers.resize(static_cast<std::size_t>(cfg.L));
    Mat state;
    if (cfg.self_attention()) {
      state = embed_tokens(m, p.X, 0);
      for (int l = 0; l < cfg.L; ++l) state = layer_forward(m, l, state, state, t.layers[static_cast<std::size_t>(l)]);
    } else {
      t.context = embed_tokens(m, p.X, 0);
      state = embed_tokens(m, p.y, cfg.N);
      for (int l = 0; l < cfg.L; ++l) state = layer_forward(m, l, t.context, state, t.layers[static_cast<std::size_t>(l)]);
    }
    t.final_state = std::move(state);
    return t;
  }

  // Backward through one layer; returns d(queries), adds d(keys) into dkeys.
  static Mat layer_backward(const AttentionModel& m, int l, const LayerCache& c, const Mat& dout, Mat& dkeys,
                            double* grad) {
    const auto& cfg = m.cfg_;
    const int D = m.D_, r = cfg.r;
    Mat dpre;
    if (cfg.rmsnorm) {
      Eigen::Map<const Vec> g(m.theta_.data() + m.gain_offset(l), D);
      Eigen::Map<Vec> dg(grad + m.gain_offset(l), D);
      dpre.resize(D, c.pre.cols());
      for (Eigen::Index j = 0; j < c.pre.cols(); ++j) {
        const double rj = c.rms[j];
        dg += dout.col(j).cwiseProduct(c.pre.col(j)) / rj;
        const Vec gd = g.cwiseProduct(dout.col(j));
        const double proj = gd.dot(c.pre.col(j));
        dpre.col(j) = gd / rj - c.pre.col(j) * (proj / (D * rj * rj * rj));
      }
    } else {
      dpre = dout;
    }
    Mat dqueries = cfg.residual ? dpre : Mat::Zero(D, c.queries.cols());
    for (int h = 0; h < cfg.H; ++h) {
      const auto& hc = c.heads[static_cast<std::size_t>(h)];
      auto K = m.weight(l, h, Part::K);
      auto Q = m.weight(l, h, Part::Q);
      auto V = m.weight(l, h, Part::V);
      auto O = m.weight(l, h, Part::O);
      const std::size_t off = m.head_offset(l, h);
      const std::size_t blk = static_cast<std::size_t>(D) * r;
      Eigen::Map<Mat> dK(grad + off, D, r), dQ(grad + off + blk, D, r), dV(grad + off + 2 * blk, D, r),
          dO(grad + off + 3 * blk, D, r);
      dO.noalias() += dpre * hc.Vu.transpose();
      const Mat gVu = O.transpose() * dpre;
      dV.noalias() += hc.U * gVu.transpose();
      const Mat gU = V * gVu;
      dkeys.noalias() += gU * hc.W.transpose();
      const Mat gW = c.keys.transpose() * gU;
      Mat gS(hc.W.rows(), hc.W.cols());
      for (Eigen::Index j = 0; j < gS.cols(); ++j) {
        const double inner = hc.W.col(j).dot(gW.col(j));
        gS.col(j) = hc.W.col(j).cwiseProduct((gW.col(j).array() - inner).matrix());
      }
      const Mat dP = hc.Qs * gS.transpose();
      const Mat dQs = hc.P * gS;
      dK.noalias() += c.keys * dP.transpose();
      dkeys.noalias() += K * dP;
      dQ.noalias() += c.queries * dQs.transpose();
      dqueries.noalias() += Q * dQs;
    }
    return dqueries;
  }

  static void embed_backward(const AttentionModel& m, const Mat& dZ, int first_col, double* grad) {
    const auto& cfg = m.cfg_;
    if (cfg.positional == "none") return;
    Eigen::Map<Mat> dE(grad + m.encoding_offset(), m.encoding_rows(), m.encoding_cols());
    if (cfg.positional == "additive") {
      dE.middleCols(first_col, dZ.cols()) += dZ;
    } else {
      dE.middleCols(first_col, dZ.cols()) += dZ.bottomRows(cfg.d_e);
    }
  }
};

Mat AttentionModel::forward(const PointConfiguration& p) const {
  return Layout::forward(*this, p).final_state.topRows(cfg_.d);
}

double AttentionModel::sample_loss(const PointConfiguration& p, const Mat& target) const {
  const Mat out = forward(p);
  return (out - target).squaredNorm() / static_cast<double>(out.cols());
}

double AttentionModel::loss(const Batch& batch) const {
  double s = 0.0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) s += sample_loss(batch.inputs[i], batch.targets[i]);
  s /= static_cast<double>(batch.inputs.size());
  if (!std::isfinite(s)) throw NonFiniteLoss("non-finite loss in forward pass", -1);
  return s;
}

double AttentionModel::sample_loss_grad(const PointConfiguration& p, const Mat& target, double* grad) const {
  auto t = Layout::forward(*this, p);
  const Mat out = t.final_state.topRows(cfg_.d);
  const double T = static_cast<double>(out.cols());
  const double loss = (out - target).squaredNorm() / T;
  Mat dstate = Mat::Zero(D_, out.cols());
  dstate.topRows(cfg_.d) = 2.0 * (out - target) / T;
  if (cfg_.self_attention()) {
    for (int l = cfg_.L - 1; l >= 0; --l) {
      Mat dkeys = Mat::Zero(D_, dstate.cols());
      Mat dq = Layout::layer_backward(*this, l, t.layers[static_cast<std::size_t>(l)], dstate, dkeys, grad);
      dstate = dq + dkeys;
    }
    Layout::embed_backward(*this, dstate, 0, grad);
  } else {
    Mat dcontext = Mat::Zero(D_, cfg_.N);
    for (int l = cfg_.L - 1; l >= 0; --l)
      dstate = Layout::layer_backward(*this, l, t.layers[static_cast<std::size_t>(l)], dstate, dcontext, grad);
    Layout::embed_backward(*this, dcontext, 0, grad);
    Layout::embed_backward(*this, dstate, cfg_.N, grad);
  }
  return loss;
}

double AttentionModel::loss_and_grad(const Batch& batch, std::vector<double>& grad, Exec exec) const {
  const std::size_t B = batch.inputs.size();
  if (B == 0) throw InvalidArgument("empty batch");
  const std::size_t P = theta_.size();
  // One gradient slot per sample, reduced in sample order with compensated summation.
  std::vector<double> slots(P * B, 0.0);
  std::vector<double> losses(B, 0.0);
  auto work = [&](std::size_t i) {
    losses[i] = sample_loss_grad(batch.inputs[i], batch.targets[i], slots.data() + i * P);
  };
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < B; ++i) work(i);
  } else {
    std::exception_ptr failure;
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < B; ++i) {
      try {
        work(i);
      } catch (...) {
#pragma omp critical
        if (!failure) failure = std::current_exception();
      }
    }
    if (failure) std::rethrow_exception(failure);
  }
  grad.assign(P, 0.0);
  const double inv = 1.0 / static_cast<double>(B);
  for (std::size_t k = 0; k < P; ++k) {
    double s = 0.0, comp = 0.0;
    for (std::size_t i = 0; i < B; ++i) {
      const double x = slots[i * P + k];
      const double t = s + x;
      comp += std::abs(s) >= std::abs(x) ? (s - t) + x : (x - t) + s;
      s = t;
    }
    grad[k] = (s + comp) * inv;
  }
  double total = 0.0;
  for (double l : losses) total += l;
  if (!std::isfinite(total)) throw NonFiniteLoss("non-finite loss in forward pass", -1);
  return total * inv;
}

void adamw_step(std::vector<double>& theta, const std::vector<double>& grad, AdamState& st, double lr, double beta1,
                double beta2, double eps, double weight_decay) {
  if (st.m.size() != theta.size()) {
    st.m.assign(theta.size(), 0.0);
    st.v.assign(theta.size(), 0.0);
    st.t = 0;
  }
  ++st.t;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (1.0 - beta1) * grad[i];
    st.v[i] = beta2 * st.v[i] + (1.0 - beta2) * grad[i] * grad[i];
    theta[i] *= 1.0 - lr * weight_decay;
    const double mhat = st.m[i] / bc1;
    const double vhat = st.v[i] / bc2;
    theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

void sgd_step(std::vector<double>& theta, const std::vector<double>& grad, double lr, double weight_decay) {
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * (grad[i] + weight_decay * theta[i]);
}

double scheduled_lr(const TrainConfig& cfg, long step) {
  if (cfg.schedule == "constant") return cfg.lr;
  if (step < cfg.warmup_steps) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_steps);
  const long span = std::max(1L, cfg.steps - cfg.warmup_steps);
  const double progress = static_cast<double>(step - cfg.warmup_steps) / static_cast<double>(span);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

KqDiagnostic kq_angle(const Mat& KQt) {
  KqDiagnostic k;
  k.norm = KQt.norm();
  if (k.norm == 0.0) {
    k.angle_defined = false;
    k.angle = std::numeric_limits<double>::quiet_NaN();
    return k;
  }
  const double cosv = KQt.trace() / (k.norm * std::sqrt(static_cast<double>(KQt.rows())));
  k.angle = std::acos(std::clamp(cosv, -1.0, 1.0));
  return k;
}

std::vector<KqDiagnostic> kq_diagnostics(const AttentionModel& model) {
  const auto& cfg = model.config();
  std::vector<KqDiagnostic> out;
  if (cfg.r != cfg.model_dim()) return out;
  for (int l = 0; l < cfg.L; ++l)
    for (int h = 0; h < cfg.H; ++h) {
      const Mat KQt = model.weight(l, h, AttentionModel::Part::K) * model.weight(l, h, AttentionModel::Part::Q).transpose();
      auto k = kq_angle(KQt);
      k.layer = l;
      k.head = h;
      out.push_back(k);
    }
  return out;
}

TrainReport train(const TrainConfig& cfg, AttentionModel* trained, Exec exec) {
  cfg.validate();
  TrainReport rep;
  rep.config = cfg;
  AttentionModel model(cfg);
  SeededRng init_rng(cfg.seed, 0);
  model.init(init_rng);
  SeededRng data_rng(cfg.seed, 1);
  SeededRng monitor_rng(cfg.seed, 2);
  const Batch monitor = make_batch(cfg, cfg.monitor_batch, monitor_rng);
  AdamState adam;
  std::vector<double> grad;

  auto diverging = [&](double v) { return !std::isfinite(v) || v > cfg.divergence_threshold; };
  long step = 0;
  for (; step < cfg.steps; ++step) {
    const Batch batch = make_batch(cfg, cfg.batch, data_rng);
    double batch_loss = std::numeric_limits<double>::quiet_NaN();
    try {
      batch_loss = model.loss_and_grad(batch, grad, exec);
      if (step % cfg.log_every == 0) {
        const double mon = model.loss(monitor);
        rep.loss_curve.emplace_back(step, mon);
        rep.batch_curve.emplace_back(step, batch_loss);
      }
    } catch (const NonFiniteLoss&) {
      batch_loss = std::numeric_limits<double>::quiet_NaN();
    }
    if (diverging(batch_loss)) {
      if (rep.loss_curve.empty() || rep.loss_curve.back().first != step) rep.loss_curve.emplace_back(step, batch_loss);
      rep.diverged = true;
      rep.stop_reason = std::isfinite(batch_loss) ? "loss exceeded divergence threshold at step " + std::to_string(step)
                                                   : "non-finite loss at step " + std::to_string(step);
      break;
    }
    const double lr = scheduled_lr(cfg, step);
    if (cfg.optimizer == "adamw") {
      adamw_step(model.params(), grad, adam, lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
    } else {
      sgd_step(model.params(), grad, lr, cfg.weight_decay);
    }
  }
  rep.steps_completed = step;
  if (!rep.diverged) {
    const double mon = model.loss(monitor);
    rep.loss_curve.emplace_back(step, mon);
    rep.final_eval = run_estimator(
        cfg.eval_samples, cfg.seed ^ 0x5eedf00dULL,
        [&](SeededRng& rng) {
          Batch one = make_batch(cfg, 1, rng);
          return model.sample_loss(one.inputs[0], one.targets[0]);
        },
        exec);
  }
  rep.kq = kq_diagnostics(model);
  if (trained) *trained = std::move(model);
  return rep;
}

nlohmann::json report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["config"] = config_to_json(r.config);
  j["diverged"] = r.diverged;
  j["stop_reason"] = r.stop_reason;
  j["steps_completed"] = r.steps_completed;
  j["final_eval"] = {{"mean", r.final_eval.mean},
                     {"stderr", r.final_eval.std_error},
                     {"n", r.final_eval.n},
                     {"seed", r.final_eval.seed}};
  j["loss_curve"] = nlohmann::json::array();
  for (const auto& [s, l] : r.loss_curve) j["loss_curve"].push_back({s, l});
  j["kq"] = nlohmann::json::array();
  for (const auto& k : r.kq) {
    nlohmann::json e = {{"layer", k.layer}, {"head", k.head}, {"norm", k.norm}, {"angle_defined", k.angle_defined}};
    e["angle"] = k.angle_defined ? nlohmann::json(k.angle) : nlohmann::json(nullptr);
    j["kq"].push_back(e);
  }
  return j;
}

}  // namespace rankattn
