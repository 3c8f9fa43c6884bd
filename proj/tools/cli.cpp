#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <sstream>

#include <CLI11.hpp>
#include <boost/math/distributions/normal.hpp>
#include <json.hpp>
#include <omp.h>

#include "rankattn/attention.hpp"
#include "rankattn/constructions.hpp"
#include "rankattn/csv.hpp"
#include "rankattn/errors.hpp"
#include "rankattn/montecarlo.hpp"
#include "rankattn/spectral.hpp"
#include "rankattn/targets.hpp"
#include "rankattn/trainer.hpp"

namespace rankattn {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum Exit { kOk = 0, kOutsideBand = 1, kBadParams = 2, kTolerance = 3, kDiverged = 4, kInternal = 5 };

// Raised for parameter problems detected by the front end itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t default_seed() {
  if (const char* s = std::getenv("RANKATTN_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw UsageError("RANKATTN_SEED is not an unsigned integer");
    }
  }
  return 1;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stoi(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not an integer list: '" + s + "'");
    }
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("not a number list: '" + s + "'");
    }
  }
  return out;
}

std::string join(const std::vector<int>& v, char sep) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

std::string csv_line(const std::vector<std::string>& fields) {
  std::ostringstream os;
  write_csv_row(os, fields);
  return os.str();
}

struct Common {
  std::uint64_t seed = 1;
  int threads = 1;
  Exec exec() const { return threads > 1 ? Exec::parallel : Exec::serial; }
};

void apply_threads(const Common& c) {
  if (c.threads < 1) throw UsageError("--threads must be >= 1");
  omp_set_num_threads(c.threads);
}

void write_manifest(const fs::path& path, const std::string& subcommand, const json& params, std::uint64_t seed,
                    const std::vector<std::string>& outputs) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  json m = {{"subcommand", subcommand},
            {"parameters", params},
            {"seed", seed},
            {"outputs", outputs},
            {"version", kArtifactVersion}};
  std::ofstream f(path);
  if (!f) throw UsageError("cannot write " + path.string());
  f << m.dump(2) << "\n";
}

// Writes `body` to `out_path` (after its manifest) or to the stream when no path is given.
void emit(const std::string& out_path, const std::string& subcommand, const json& params, std::uint64_t seed,
          const std::string& body, std::ostream& out) {
  if (out_path.empty()) {
    out << body;
    return;
  }
  write_manifest(out_path + ".manifest.json", subcommand, params, seed, {out_path});
  std::ofstream f(out_path);
  if (!f) throw UsageError("cannot write " + out_path);
  f << body;
}

// ---- spectra -------------------------------------------------------------

struct SpectraArgs {
  int d = 3;
  int lmax = 9;
  std::string out;
};

int cmd_spectra(const SpectraArgs& a, const Common& c, std::ostream& out) {
  if (a.d < 3) throw InvalidDimension("spectra needs d >= 3");
  if (a.lmax < 0) throw InvalidArgument("lmax must be >= 0");
  const auto table = build_spectral_table(a.d, a.lmax, c.exec());
  std::string body = csv_line({"d", "l", "N", "pnorm2", "eta", "alpha", "c"});
  for (const auto& e : table.rows)
    body += csv_line({std::to_string(a.d), std::to_string(e.l), fmt17(e.N), fmt17(e.pnorm2), fmt17(e.eta),
                      fmt17(e.alpha), fmt17(e.c)});
  emit(a.out, "spectra", {{"d", a.d}, {"lmax", a.lmax}}, c.seed, body, out);
  return kOk;
}

// ---- lower-bound ---------------------------------------------------------

struct LowerBoundArgs {
  int d = 10;
  int r = 1;
  double H = 1;
  int lmax = 101;
  bool no_clamp = false;
  std::string out;
};

int cmd_lower_bound(const LowerBoundArgs& a, const Common& c, std::ostream& out) {
  if (a.d < 3) throw InvalidDimension("lower-bound needs d >= 3");
  if (a.r < 1 || a.r > a.d) throw InvalidArgument("lower-bound needs 1 <= r <= d");
  if (a.lmax < 1) throw InvalidArgument("lmax must be >= 1");
  LowerBoundQuery q{a.d, a.r, a.H, a.lmax, !a.no_clamp};
  const auto res = lower_bound(build_spectral_table(a.d, a.lmax, c.exec()), q);
  std::string body = csv_line({"l", "N", "M", "eta2", "weight", "contribution"});
  for (const auto& t : res.terms)
    body += csv_line({std::to_string(t.l), fmt17(t.N), fmt17(t.M), fmt17(t.eta2), fmt17(t.weight),
                      fmt17(t.contribution)});
  const json params = {{"d", a.d}, {"r", a.r}, {"H", a.H}, {"lmax", a.lmax}, {"clamp", !a.no_clamp}};
  std::string summary = csv_line({"d", "r", "H", "lmax", "lower_bound", "tail_energy", "tail_c2_estimate"});
  summary += csv_line({std::to_string(a.d), std::to_string(a.r), fmt17(a.H), std::to_string(a.lmax), fmt17(res.value),
                       fmt17(res.tail_energy), fmt17(res.tail_c2_estimate)});
  if (a.out.empty()) {
    out << summary << "\n" << body;
  } else {
    out << summary;
    emit(a.out, "lower-bound", params, c.seed, body, out);
  }
  return kOk;
}

// ---- verify --------------------------------------------------------------

struct VerifyArgs {
  std::string lemma;
  int d = 0;  // 0 picks the lemma default
  std::int64_t n = 100000;
  double a = 0.5;  // edge gap
  double eps = 0.05;
  int H = 1001;
  int H_small = 11;
  int psi_a = 0;  // 0 picks floor(||w||) + 3
  double w_norm = 0.0;  // 0 picks d
  int l = 1;
  double cos = 1.0;
  int r = 2;
  std::string d_list = "8,16,24";
  std::string form = "correlation";
  int inner_n = 256;
};

struct VerifyRow {
  std::vector<std::pair<std::string, std::string>> params;
  McEstimate est;
  std::string status;
  std::string band;
};

VerifyRow verify_kernel(const VerifyArgs& a, const Common& c) {
  const int d = a.d ? a.d : 8;
  SeededRng rng(c.seed, 0);
  Omega w{sample_sphere(d, rng), sample_sphere(d, rng)};
  Omega wp{sample_sphere(d, rng), sample_sphere(d, rng)};
  const double ref = kernel_closed_form(w, wp);
  VerifyRow row;
  row.params = {{"d", std::to_string(d)}, {"reference", fmt17(ref)}};
  row.est = kernel_mc_check(d, w, wp, a.n, c.seed, c.exec());
  row.status = within_band(row.est, ref) ? "pass" : "fail";
  row.band = "|mean-reference|<=3*stderr";
  return row;
}

// x1, x2, y unit vectors with <x1 - x2, y> = gap, in a random orientation.
void edge_instance(int d, double gap, SeededRng& rng, Vec& x1, Vec& x2, Vec& y) {
  if (d < 3) throw InvalidDimension("edge instance needs d >= 3");
  if (!(gap > 0.0 && gap <= 2.0)) throw InvalidArgument("edge gap a must lie in (0, 2]");
  const Mat Q = sample_haar_orthogonal(d, rng);
  const double h = gap / 2.0, s = std::sqrt(1.0 - h * h);
  y = Q.col(0);
  x1 = h * Q.col(0) + s * Q.col(1);
  x2 = -h * Q.col(0) + s * Q.col(2);
}

VerifyRow verify_edge(const VerifyArgs& a, const Common& c) {
  const int d = a.d ? a.d : 32;
  SeededRng rng(c.seed, 0);
  Vec x1, x2, y;
  edge_instance(d, a.a, rng, x1, x2, y);
  VerifyRow row;
  row.params = {{"d", std::to_string(d)}, {"a", fmt17(a.a)}};
  row.est = edge_probability(d, x1, x2, y, a.n, c.seed, c.exec());
  if (d < 8) {
    row.status = "unasserted";
  } else {
    row.status = row.est.mean >= 0.5 + 3.0 * row.est.std_error ? "pass" : "fail";
  }
  row.band = "mean>=0.5+3*stderr";
  return row;
}

VerifyRow verify_close_pair(const VerifyArgs& a, const Common& c) {
  const int d = a.d ? a.d : 16;
  const double bound = 2.0 * a.eps * std::sqrt(static_cast<double>(d));
  VerifyRow row;
  row.params = {{"d", std::to_string(d)}, {"eps", fmt17(a.eps)}, {"bound", fmt17(bound)}};
  row.est = close_pair_probability(d, a.eps, a.n, c.seed, c.exec());
  row.status = row.est.mean <= bound + 3.0 * row.est.std_error ? "pass" : "fail";
  row.band = "mean<=2*eps*sqrt(d)+3*stderr";
  return row;
}

VerifyRow verify_majority(const VerifyArgs& a, const Common& c) {
  const int d = a.d ? a.d : 16;
  if (a.H_small >= a.H) throw InvalidArgument("majority check needs H_small < H");
  const auto small = majority_accuracy(d, a.H_small, a.n, c.seed, c.exec());
  VerifyRow row;
  row.est = majority_accuracy(d, a.H, a.n, c.seed + 1, c.exec());
  const double gap_se = std::hypot(small.std_error, row.est.std_error);
  row.params = {{"d", std::to_string(d)},
                {"H", std::to_string(a.H)},
                {"H_small", std::to_string(a.H_small)},
                {"mean_small", fmt17(small.mean)}};
  row.status = small.mean - row.est.mean > 3.0 * gap_se ? "pass" : "fail";
  row.band = "mean_small-mean>3*stderr_of_difference";
  return row;
}

VerifyRow verify_psi(const VerifyArgs& a, const Common& c) {
  const int d = a.d ? a.d : 8;
  const double norm = a.w_norm > 0.0 ? a.w_norm : static_cast<double>(d);
  const int psi_a = a.psi_a ? a.psi_a : static_cast<int>(std::floor(norm)) + 3;
  if (psi_a < 1) throw InvalidArgument("psi needs a >= 1");
  SeededRng rng(c.seed, 0);
  const Vec w = norm * sample_sphere(d, rng);
  const auto res = psi_norm(d, w, psi_a, a.n, c.seed, c.exec());
  VerifyRow row;
  row.params = {{"d", std::to_string(d)},
                {"w_norm", fmt17(norm)},
                {"a", std::to_string(psi_a)},
                {"precondition", res.precondition_ok ? "ok" : "violated"}};
  row.est = res.estimate;
  if (!res.precondition_ok) {
    row.status = "unasserted";
  } else {
    row.status = row.est.mean >= 1.0 / 40.0 - 3.0 * row.est.std_error ? "pass" : "fail";
  }
  row.band = "mean>=1/40-3*stderr";
  return row;
}

VerifyRow verify_ortho(const VerifyArgs& a, const Common& c) {
  const int D = a.d ? a.d : 6;
  Mat X = Mat::Zero(D, D);
  for (int i = 0; i < D; ++i) X(i, i) = i + 1.0;
  const auto res = ortho_conjugation_check(D, X, a.n, c.seed, c.exec());
  // Bonferroni over the D(D-1)/2 distinct off-diagonal entries at the 3-sigma family level.
  const double family = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), 3.0));
  const double m = D * (D - 1) / 2.0;
  const double z = boost::math::quantile(boost::math::complement(boost::math::normal(), family / (2.0 * m)));
  VerifyRow row;
  row.est.mean = res.fitted_s;
  row.est.std_error = res.std_error.diagonal().mean();
  row.est.n = res.n;
  row.est.seed = res.seed;
  const double tr = res.trace;
  const bool s_matches = std::abs(res.fitted_s - tr / D) <= 1e-12 * tr + 3.0 * row.est.std_error;
  row.params = {{"D", std::to_string(D)},
                {"trace", fmt17(tr)},
                {"trace_over_D", fmt17(tr / D)},
                {"max_offdiag_sigma", fmt17(res.max_offdiag_sigma)},
                {"offdiag_z", fmt17(z)}};
  row.status = s_matches && res.max_offdiag_sigma <= z ? "pass" : "fail";
  row.band = "s=trace/D;max_offdiag_sigma<=offdiag_z";
  return row;
}

VerifyRow verify_hecke_funk(const VerifyArgs& a, const Common& c) {
  const int d = a.d ? a.d : 6;
  if (d < 3) throw InvalidDimension("hecke-funk needs d >= 3");
  if (!(std::abs(a.cos) <= 1.0)) throw InvalidArgument("--cos must lie in [-1, 1]");
  SeededRng rng(c.seed, 0);
  const Mat Q = sample_haar_orthogonal(d, rng);
  const Vec x0 = Q.col(0);
  const Vec x = a.cos * Q.col(0) + std::sqrt(1.0 - a.cos * a.cos) * Q.col(1);
  const double ref = hecke_funk_reference(d, a.l, x, x0);
  VerifyRow row;
  row.params = {{"d", std::to_string(d)}, {"l", std::to_string(a.l)}, {"cos", fmt17(a.cos)}, {"reference", fmt17(ref)}};
  row.est = hecke_funk_check(d, a.l, x, x0, a.n, c.seed, c.exec());
  row.status = within_band(row.est, ref) ? "pass" : "fail";
  row.band = "|mean-reference|<=3*stderr";
  return row;
}

VerifyRow verify_correlation(const VerifyArgs& a, const Common& c) {
  const auto ds = a.d ? std::vector<int>{a.d} : parse_int_list(a.d_list);
  if (ds.empty()) throw InvalidArgument("correlation needs at least one d");
  CorrelationForm form;
  if (a.form == "pointwise") {
    form = CorrelationForm::pointwise;
  } else if (a.form == "correlation") {
    form = CorrelationForm::correlation;
  } else {
    throw InvalidArgument("--form must be 'pointwise' or 'correlation'");
  }
  const Probe g = [](const Vec& w, const Vec& y) {
    const double p = w[0] * y[0];
    return p > 0.0 ? 1.0 : (p < 0.0 ? -1.0 : 0.0);
  };
  std::vector<McEstimate> est;
  std::string means;
  for (int d : ds) {
    if (d < a.r) throw InvalidArgument("every d must be >= r");
    est.push_back(correlation_decay(d, a.r, 2 * d * d + 1, a.n, c.seed, g, form, a.inner_n, c.exec()));
    if (!means.empty()) means += ';';
    means += fmt17(est.back().mean);
  }
  bool trend = true;
  for (std::size_t i = 1; i < est.size(); ++i)
    if (est[i].mean - est[i - 1].mean > 3.0 * std::hypot(est[i].std_error, est[i - 1].std_error)) trend = false;
  VerifyRow row;
  row.params = {{"d_list", join(ds, ';')}, {"r", std::to_string(a.r)}, {"form", a.form}, {"means", means}};
  row.est = est.back();
  row.status = trend ? "pass" : "fail";
  row.band = "non-increasing_in_d_at_3*stderr";
  return row;
}

int cmd_verify(const VerifyArgs& a, const Common& c, std::ostream& out) {
  if (a.n < 2) throw InvalidArgument("--n must be >= 2 for a standard error");
  static const std::map<std::string, std::function<VerifyRow(const VerifyArgs&, const Common&)>> lemmas = {
      {"kernel", verify_kernel},         {"edge", verify_edge},   {"close-pair", verify_close_pair},
      {"majority", verify_majority},     {"psi", verify_psi},     {"ortho", verify_ortho},
      {"hecke-funk", verify_hecke_funk}, {"correlation", verify_correlation}};
  const auto it = lemmas.find(a.lemma);
  if (it == lemmas.end()) throw UsageError("unknown lemma '" + a.lemma + "'");
  const VerifyRow row = it->second(a, c);
  std::vector<std::string> header{"name"}, fields{a.lemma};
  for (const auto& [k, v] : row.params) {
    header.push_back(k);
    fields.push_back(v);
  }
  for (const char* h : {"mean", "stderr", "n", "seed", "status", "band"}) header.push_back(h);
  fields.insert(fields.end(), {fmt17(row.est.mean), fmt17(row.est.std_error), std::to_string(row.est.n),
                               std::to_string(row.est.seed), row.status, row.band});
  out << csv_line(header) << csv_line(fields);
  return row.status == "fail" ? kOutsideBand : kOk;
}

// ---- construct-eval ------------------------------------------------------

struct ConstructArgs {
  std::string construction;
  int d = 16;
  int N = 4;
  int H = 101;
  std::int64_t n = 10000;
  double temperature = 1e3;
  bool hardmax = false;
  double alpha = 1e3;
  double beta = 1e3;
  double eps = 0.25;
  std::string bias;
  std::string save;
};

int cmd_construct_eval(const ConstructArgs& a, const Common& c, std::ostream& out) {
  if (a.n < 2) throw InvalidArgument("--n must be >= 2 for a standard error");
  if (a.d < 1) throw InvalidDimension("d must be >= 1");
  const AttentionKind kind{a.hardmax ? Mode::hardmax : Mode::softmax};
  SeededRng param_rng(c.seed, 0);
  DistributionSpec dist;
  dist.d = a.d;
  Evaluable model, target;
  std::vector<SoftmaxHead> saved;
  json params = {{"construction", a.construction}, {"d", a.d}, {"n", a.n}};

  if (a.construction == "fact1") {
    dist.kind = DistributionSpec::Kind::sphere_iid;
    dist.N = a.N;
    const SoftmaxHead head = full_rank_nearest(a.d, a.temperature);
    saved = {head};
    model = [head, kind](const PointConfiguration& p) { return attend(head, p.X, p.y, kind); };
    target = [](const PointConfiguration& p) { return Mat(nearest_neighbor(p.X, p.y)); };
    params.update({{"N", a.N}, {"temperature", a.temperature}, {"hardmax", a.hardmax}});
  } else if (a.construction == "fact3") {
    dist.kind = DistributionSpec::Kind::sphere_iid;
    dist.N = a.N;
    Vec b = Vec::Zero(a.N);
    if (!a.bias.empty()) {
      const auto v = parse_double_list(a.bias);
      if (static_cast<int>(v.size()) != a.N) throw ConfigurationError("--bias needs N entries");
      for (int i = 0; i < a.N; ++i) b[i] = v[static_cast<std::size_t>(i)];
    }
    const BiasedHead head = biased_full_rank(a.d, b);
    saved = {head.base};
    model = [head](const PointConfiguration& p) { return Mat(biased_attend(head, p.X, p.y)); };
    target = [b](const PointConfiguration& p) { return Mat(biased_argmax_neighbor(p.X, p.y, b)); };
    params.update({{"N", a.N}, {"bias", a.bias}});
  } else if (a.construction == "majority2layer") {
    dist.kind = DistributionSpec::Kind::orthogonal_DN;
    dist.N = 2;
    std::vector<Vec> q;
    for (int h = 0; h < a.H; ++h) q.push_back(sample_sphere(a.d, param_rng));
    const auto t = majority_two_layer(a.d, a.H, q, a.alpha, a.beta, kind.mode);
    model = [t](const PointConfiguration& p) {
      return Mat(two_layer_forward(t, majority_tokens(p.X.col(0), p.X.col(1), p.y)));
    };
    target = [](const PointConfiguration& p) { return Mat(nearest_neighbor(p.X, p.y)); };
    params.update({{"H", a.H}, {"alpha", a.alpha}, {"beta", a.beta}, {"hardmax", a.hardmax}});
  } else if (a.construction == "modemlp") {
    dist.kind = DistributionSpec::Kind::orthogonal_DN;
    dist.N = 2;
    const auto pipe = mode_mlp_pipeline(a.d, a.H, a.eps, a.hardmax ? 0.0 : a.temperature, param_rng);
    model = [pipe](const PointConfiguration& p) { return Mat(pipe.evaluate(p.X, p.y)); };
    target = [](const PointConfiguration& p) { return Mat(nearest_neighbor(p.X, p.y)); };
    params.update({{"H", a.H}, {"eps", a.eps}, {"temperature", a.temperature}, {"hardmax", a.hardmax}});
  } else if (a.construction == "randmajority") {
    dist.kind = DistributionSpec::Kind::orthogonal_DN;
    dist.N = 2;
    const auto maj = random_head_majority(a.d, a.H, param_rng);
    saved = maj.heads;
    const std::uint64_t seed = c.seed;
    model = [maj, seed](const PointConfiguration& p) {
      // Tie-breaking stream keyed by the input so the estimate is order independent.
      std::uint64_t key;
      std::memcpy(&key, p.y.data(), sizeof key);
      SeededRng tie(seed, key);
      return Mat(p.X.col(maj.select(p.X, p.y, tie)));
    };
    target = [](const PointConfiguration& p) { return Mat(nearest_neighbor(p.X, p.y)); };
    params.update({{"H", a.H}});
  } else {
    throw UsageError("unknown construction '" + a.construction + "'");
  }
  dist.validate();

  std::vector<std::string> outputs;
  if (!a.save.empty()) {
    if (saved.empty()) throw UsageError("--save is only available for fact1, fact3 and randmajority");
    outputs.push_back(a.save);
    write_manifest(a.save + ".manifest.json", "construct-eval", params, c.seed, outputs);
    std::ofstream f(a.save);
    if (!f) throw UsageError("cannot write " + a.save);
    f << heads_to_json(saved, a.construction).dump(2) << "\n";
  }
  const auto est = estimate_mse(model, target, dist, a.n, c.seed, c.exec());
  out << csv_line({"construction", "d", "N", "H", "mean", "stderr", "n", "seed"});
  out << csv_line({a.construction, std::to_string(a.d), std::to_string(dist.N), std::to_string(a.H), fmt17(est.mean),
                   fmt17(est.std_error), std::to_string(est.n), std::to_string(est.seed)});
  return kOk;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::string out;
};

int cmd_train(const TrainArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
  std::ifstream f(a.config);
  if (!f) throw UsageError("cannot read config " + a.config);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("malformed config JSON: ") + e.what());
  }
  const TrainConfig cfg = config_from_json(j);
  const fs::path dir(a.out);
  fs::create_directories(dir);
  const std::string report_path = (dir / "report.json").string();
  const std::string loss_path = (dir / "loss.csv").string();
  write_manifest(dir / "manifest.json", "train", {{"config", config_to_json(cfg)}, {"config_path", a.config}}, cfg.seed,
                 {report_path, loss_path});
  const TrainReport rep = train(cfg, nullptr, c.exec());
  {
    std::ofstream r(report_path);
    r << report_to_json(rep).dump(2) << "\n";
  }
  {
    std::ofstream l(loss_path);
    write_csv_row(l, {"step", "loss"});
    for (const auto& [s, v] : rep.loss_curve) write_csv_row(l, {std::to_string(s), fmt17(v)});
  }
  if (rep.diverged) {
    err << "training diverged: " << rep.stop_reason << "\n";
    return kDiverged;
  }
  out << csv_line({"final_mse", "stderr", "n", "steps"});
  out << csv_line({fmt17(rep.final_eval.mean), fmt17(rep.final_eval.std_error), std::to_string(rep.final_eval.n),
                   std::to_string(rep.steps_completed)});
  return kOk;
}

// ---- u-measure -----------------------------------------------------------

struct UMeasureArgs {
  std::string d_list = "4,16,64";
  int lmax = 49;
  int grid = 201;
  std::string out;
};

int cmd_u_measure(const UMeasureArgs& a, const Common& c, std::ostream& out) {
  if (a.grid < 1) throw InvalidArgument("--grid must hold at least one point");
  const auto ds = parse_int_list(a.d_list);
  if (ds.empty()) throw InvalidArgument("--d-list is empty");
  if (a.lmax < 1) throw InvalidArgument("lmax must be >= 1");
  for (int d : ds)
    if (d < 3) throw InvalidDimension("u-measure needs d >= 3");
  // Angles theta in [-pi/2, pi/2], t = sin(theta). The negative half mirrors the positive half exactly.
  const int half = a.grid / 2;
  std::vector<double> pos;
  for (int i = 1; i <= half; ++i) pos.push_back(std::numbers::pi / 2.0 * i / half);
  std::vector<double> angles;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it) angles.push_back(-*it);
  if (a.grid % 2 == 1) angles.push_back(0.0);
  angles.insert(angles.end(), pos.begin(), pos.end());

  std::vector<std::vector<double>> cols;
  for (int d : ds) {
    const auto table = build_spectral_table(d, a.lmax, c.exec());
    std::vector<double> v;
    for (double th : angles) {
      const double t = std::sin(std::abs(th));
      const double u = u_measure(table, t);
      v.push_back(th < 0.0 ? -u : u);
    }
    cols.push_back(std::move(v));
  }
  std::vector<std::string> header{"angle", "t"};
  for (int d : ds) header.push_back("u_d" + std::to_string(d));
  std::string body = csv_line(header);
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double t = angles[i] < 0.0 ? -std::sin(-angles[i]) : std::sin(angles[i]);
    std::vector<std::string> row{fmt17(angles[i]), fmt17(t)};
    for (const auto& col : cols) row.push_back(fmt17(col[i]));
    body += csv_line(row);
  }
  emit(a.out, "u-measure", {{"d_list", ds}, {"lmax", a.lmax}, {"grid", a.grid}}, c.seed, body, out);
  return kOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rank and head-count experiments for attention on nearest-neighbor targets", "rankattn"};
  app.require_subcommand(1);
  Common common;
  try {
    common.seed = default_seed();
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kBadParams;
  }
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed (default: $RANKATTN_SEED or 1)");
    sub->add_option("--threads", common.threads, "OpenMP threads; results do not depend on this");
  };

  SpectraArgs spectra;
  auto* s_spectra = app.add_subcommand("spectra", "Ultraspherical coefficient table as CSV");
  s_spectra->add_option("--d", spectra.d, "Ambient dimension (>= 3)")->required();
  s_spectra->add_option("--lmax", spectra.lmax, "Largest degree");
  s_spectra->add_option("--out", spectra.out, "Output CSV path (default stdout)");
  add_common(s_spectra);

  LowerBoundArgs lb;
  auto* s_lb = app.add_subcommand("lower-bound", "Rank lower bound and per-degree contributions");
  s_lb->add_option("--d", lb.d)->required();
  s_lb->add_option("--r", lb.r)->required();
  s_lb->add_option("--H", lb.H)->required();
  s_lb->add_option("--lmax", lb.lmax);
  s_lb->add_flag("--no-clamp", lb.no_clamp, "Keep negative per-degree weights");
  s_lb->add_option("--out", lb.out, "Per-degree CSV path");
  add_common(s_lb);

  VerifyArgs va;
  auto* s_verify = app.add_subcommand("verify", "Monte Carlo check of one lemma");
  s_verify->add_option("--lemma", va.lemma)
      ->required()
      ->check(CLI::IsMember({"kernel", "edge", "close-pair", "majority", "psi", "ortho", "hecke-funk", "correlation"}));
  s_verify->add_option("--d", va.d, "Dimension (D for ortho)");
  s_verify->add_option("--n", va.n, "Samples");
  s_verify->add_option("--a", va.a, "edge: gap |<x1 - x2, y>|");
  s_verify->add_option("--eps", va.eps, "close-pair: threshold");
  s_verify->add_option("--H", va.H, "majority: head count");
  s_verify->add_option("--H-small", va.H_small, "majority: comparison head count");
  s_verify->add_option("--psi-a", va.psi_a, "psi: integer a");
  s_verify->add_option("--w-norm", va.w_norm, "psi: norm of w");
  s_verify->add_option("--l", va.l, "hecke-funk: degree");
  s_verify->add_option("--cos", va.cos, "hecke-funk: <x, x0>");
  s_verify->add_option("--r", va.r, "correlation: probe rank");
  s_verify->add_option("--d-list", va.d_list, "correlation: dimensions");
  s_verify->add_option("--form", va.form, "correlation: pointwise or correlation");
  s_verify->add_option("--inner-n", va.inner_n, "correlation: inner samples per w");
  add_common(s_verify);

  ConstructArgs ca;
  auto* s_con = app.add_subcommand("construct-eval", "Mean squared error of an explicit construction");
  s_con->add_option("--construction", ca.construction)
      ->required()
      ->check(CLI::IsMember({"fact1", "fact3", "majority2layer", "modemlp", "randmajority"}));
  s_con->add_option("--d", ca.d);
  s_con->add_option("--N", ca.N);
  s_con->add_option("--H", ca.H);
  s_con->add_option("--n", ca.n);
  s_con->add_option("--temperature", ca.temperature);
  s_con->add_flag("--hardmax", ca.hardmax);
  s_con->add_option("--alpha", ca.alpha);
  s_con->add_option("--beta", ca.beta);
  s_con->add_option("--eps", ca.eps);
  s_con->add_option("--bias", ca.bias, "fact3: comma-separated bias vector");
  s_con->add_option("--save", ca.save, "Write the head parameters as JSON");
  add_common(s_con);

  TrainArgs ta;
  auto* s_train = app.add_subcommand("train", "Train attention from a JSON config");
  s_train->add_option("--config", ta.config)->required();
  s_train->add_option("--out", ta.out)->required();
  s_train->add_option("--threads", common.threads);

  UMeasureArgs ua;
  auto* s_u = app.add_subcommand("u-measure", "Expansion of the measure u on an angle grid");
  s_u->add_option("--d-list", ua.d_list);
  s_u->add_option("--lmax", ua.lmax);
  s_u->add_option("--grid", ua.grid, "Number of angles in [-pi/2, pi/2]");
  s_u->add_option("--out", ua.out);
  add_common(s_u);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kBadParams;
  }

  try {
    apply_threads(common);
    if (s_spectra->parsed()) return cmd_spectra(spectra, common, out);
    if (s_lb->parsed()) return cmd_lower_bound(lb, common, out);
    if (s_verify->parsed()) return cmd_verify(va, common, out);
    if (s_con->parsed()) return cmd_construct_eval(ca, common, out);
    if (s_train->parsed()) return cmd_train(ta, common, out, err);
    if (s_u->parsed()) return cmd_u_measure(ua, common, out);
  } catch (const ToleranceFailure& e) {
    err << "error: " << e.what() << " (error bound " << e.error_bound << ")\n";
    return kTolerance;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kBadParams;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kBadParams;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kBadParams;
}

}  // namespace rankattn
