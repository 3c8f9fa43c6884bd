#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"

using namespace rankattn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("rankattn_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream s(line);
  std::string c;
  while (std::getline(s, c, ',')) cells.push_back(c);
  return cells;
}

}  // namespace

TEST_CASE("spectra writes the table and a manifest first") {
  const auto dir = scratch("spectra");
  const auto csv = dir / "t.csv";
  const auto r = run({"spectra", "--d", "3", "--lmax", "9", "--out", csv.string()});
  REQUIRE(r.code == 0);
  const fs::path manifest = csv.string() + ".manifest.json";
  REQUIRE(fs::exists(manifest));
  CHECK(fs::last_write_time(manifest) <= fs::last_write_time(csv));
  const auto m = nlohmann::json::parse(slurp(manifest));
  CHECK(m.at("subcommand") == "spectra");
  CHECK(m.at("outputs").at(0) == csv.string());
  CHECK(m.at("version") == kArtifactVersion);

  std::stringstream s(slurp(csv));
  std::string header, row0, row1;
  std::getline(s, header);
  std::getline(s, row0);
  std::getline(s, row1);
  CHECK(header == "d,l,N,pnorm2,eta,alpha,c");
  const auto cells = split_csv_line(row1);
  REQUIRE(cells.size() == 7);
  CHECK(cells[1] == "1");
  CHECK(cells[2] == "3");
  CHECK(std::stod(cells[4]) == doctest::Approx(0.8660254037844386).epsilon(1e-12));

  const auto again = dir / "u.csv";
  REQUIRE(run({"spectra", "--d", "3", "--lmax", "9", "--out", again.string()}).code == 0);
  CHECK(slurp(again) == slurp(csv));
}

TEST_CASE("invalid parameters exit with 2") {
  CHECK(run({"spectra", "--d", "2"}).code == 2);
  CHECK(run({"spectra"}).code == 2);
  CHECK(run({"lower-bound", "--d", "5", "--r", "6", "--H", "1"}).code == 2);
  CHECK(run({"verify", "--lemma", "kernel", "--n", "1"}).code == 2);
  CHECK(run({"verify", "--lemma", "nonsense"}).code == 2);
  CHECK(run({"construct-eval", "--construction", "fact1", "--d", "4", "--N", "8", "--n", "10"}).code == 0);
  CHECK(run({"construct-eval", "--construction", "majority2layer", "--d", "4", "--H", "0", "--n", "10"}).code == 2);
  CHECK(run({"construct-eval", "--construction", "fact1", "--temperature", "-1", "--n", "10"}).code == 2);
  CHECK(run({"u-measure", "--grid", "0"}).code == 2);
  CHECK(run({"no-such-command"}).code == 2);
}

TEST_CASE("lower bound summary and per-degree rows") {
  const auto dir = scratch("lb");
  const auto csv = dir / "lb.csv";
  const auto r = run({"lower-bound", "--d", "10", "--r", "1", "--H", "0", "--lmax", "21", "--out", csv.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("d,r,H,lmax,lower_bound,tail_energy,tail_c2_estimate", 0) == 0);
  CHECK(fs::exists(csv.string() + ".manifest.json"));
  std::stringstream s(slurp(csv));
  std::string line;
  int rows = -1;
  while (std::getline(s, line)) ++rows;
  CHECK(rows == 11);
}

TEST_CASE("verify rows report status and band") {
  const auto r = run({"verify", "--lemma", "kernel", "--n", "20000", "--seed", "3"});
  CHECK(r.code == 0);
  CHECK(r.out.find("pass") != std::string::npos);
  const auto again = run({"verify", "--lemma", "kernel", "--n", "20000", "--seed", "3"});
  CHECK(again.out == r.out);
  const auto threaded = run({"verify", "--lemma", "kernel", "--n", "20000", "--seed", "3", "--threads", "2"});
  CHECK(threaded.out == r.out);

  const auto psi = run({"verify", "--lemma", "psi", "--d", "8", "--w-norm", "4", "--n", "1000"});
  CHECK(psi.code == 0);
  CHECK(psi.out.find("unasserted") != std::string::npos);
}

TEST_CASE("construct-eval") {
  const auto r = run({"construct-eval", "--construction", "fact1", "--d", "16", "--N", "8", "--hardmax", "--n", "2000"});
  REQUIRE(r.code == 0);
  std::stringstream s(r.out);
  std::string header, row;
  std::getline(s, header);
  std::getline(s, row);
  CHECK(header == "construction,d,N,H,mean,stderr,n,seed");
  CHECK(std::stod(split_csv_line(row)[4]) == 0.0);

  const auto dir = scratch("save");
  const auto heads = dir / "heads.json";
  REQUIRE(run({"construct-eval", "--construction", "randmajority", "--d", "8", "--H", "5", "--n", "100", "--save",
               heads.string()})
              .code == 0);
  const auto j = nlohmann::json::parse(slurp(heads));
  CHECK(j.at("construction") == "randmajority");
  CHECK(j.at("H") == 5);
  CHECK(fs::exists(heads.string() + ".manifest.json"));
}

TEST_CASE("train") {
  const auto dir = scratch("train");
  nlohmann::json cfg = {{"d", 4},        {"N", 3},           {"r", 4},         {"H", 1},
                        {"steps", 40},   {"batch", 8},       {"warmup_steps", 4}, {"log_every", 10},
                        {"eval_samples", 100}, {"monitor_batch", 16}, {"lr", 0.0}};
  const auto cfg_path = dir / "cfg.json";
  std::ofstream(cfg_path) << cfg.dump();
  const auto out = dir / "run";
  const auto r = run({"train", "--config", cfg_path.string(), "--out", out.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("final_mse,stderr,n,steps", 0) == 0);
  REQUIRE(fs::exists(out / "manifest.json"));
  CHECK(fs::last_write_time(out / "manifest.json") <= fs::last_write_time(out / "report.json"));
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.at("diverged") == false);
  const auto curve = report.at("loss_curve");
  for (const auto& p : curve) CHECK(p.at(1) == curve.at(0).at(1));
  CHECK(slurp(out / "loss.csv").rfind("step,loss", 0) == 0);

  const auto out2 = dir / "run2";
  REQUIRE(run({"train", "--config", cfg_path.string(), "--out", out2.string()}).code == 0);
  CHECK(slurp(out / "report.json") == slurp(out2 / "report.json"));
  CHECK(slurp(out / "loss.csv") == slurp(out2 / "loss.csv"));

  const auto bad = dir / "bad.json";
  std::ofstream(bad) << "{\"d\": 4,";
  const auto rb = run({"train", "--config", bad.string(), "--out", (dir / "x").string()});
  CHECK(rb.code == 2);
  CHECK(rb.err.find("parse") != std::string::npos);

  const auto unknown = dir / "unknown.json";
  std::ofstream(unknown) << R"({"dee": 4})";
  CHECK(run({"train", "--config", unknown.string(), "--out", (dir / "y").string()}).code == 2);

  cfg["optimizer"] = "sgd";
  cfg["schedule"] = "constant";
  cfg["lr"] = 1e8;
  cfg["L"] = 2;
  cfg["residual"] = true;
  const auto div = dir / "div.json";
  std::ofstream(div) << cfg.dump();
  CHECK(run({"train", "--config", div.string(), "--out", (dir / "z").string()}).code == 4);
}

TEST_CASE("u-measure is odd on the angle grid") {
  const auto dir = scratch("u");
  const auto csv = dir / "u.csv";
  REQUIRE(run({"u-measure", "--d-list", "4,16", "--grid", "21", "--out", csv.string()}).code == 0);
  std::stringstream s(slurp(csv));
  std::string line;
  std::getline(s, line);
  CHECK(line == "angle,t,u_d4,u_d16");
  std::vector<std::vector<std::string>> rows;
  while (std::getline(s, line)) rows.push_back(split_csv_line(line));
  REQUIRE(rows.size() == 21);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& a = rows[i];
    const auto& b = rows[rows.size() - 1 - i];
    CHECK(std::stod(a[2]) == -std::stod(b[2]));
    CHECK(std::stod(a[3]) == -std::stod(b[3]));
  }
}
