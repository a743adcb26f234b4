#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "glyco/cli.hpp"
#include "glyco/evalcluster.hpp"
#include "glyco/textio.hpp"

namespace fs = std::filesystem;
using glyco::read_file;

namespace {

struct Run {
  int code = 0;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = glyco::cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("glyco_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_config(const fs::path& path) {
  std::ofstream(path) << "seed = 3\n"
                         "group.prediabetes.persons = 3\n"
                         "group.prediabetes.records_per_person = 3\n"
                         "group.t2d.persons = 3\n"
                         "group.t2d.records_per_person = 3\n"
                         "hybrid.epochs = 2\nhybrid.batch = 8\n"
                         "blackbox.epochs = 2\nblackbox.batch = 8\n"
                         "tcl.epochs = 3\n"
                         "mech.steps = 30\n"
                         "report.records = 2\n";
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  return line;
}

// Runs every subcommand into `dir`; returns the run directory.
fs::path pipeline(const fs::path& dir) {
  const std::string cfg = (dir / "run.cfg.in").string();
  write_config(cfg);
  const std::string r = (dir / "r").string(), data = r + "/cohort.csv";
  REQUIRE(run({"simulate", "--config", cfg, "--out", r}).code == 0);
  for (const char* m : {"hybrid", "blackbox", "tcl"}) {
    const auto res = run({"train", "--model", m, "--config", cfg, "--data", data, "--out", r});
    INFO(res.err);
    REQUIRE(res.code == 0);
  }
  REQUIRE(run({"fit-mech", "--config", cfg, "--data", data, "--out", r}).code == 0);
  REQUIRE(run({"features", "--config", cfg, "--data", data, "--out", r}).code == 0);
  REQUIRE(run({"embed", "--config", cfg, "--data", data, "--method", "raw", "--out", r}).code == 0);
  for (const char* m : {"hybrid", "blackbox", "tcl"}) {
    REQUIRE(run({"embed", "--config", cfg, "--data", data, "--checkpoint", r + "/" + m + ".json", "--out", r}).code == 0);
  }
  REQUIRE(run({"cluster", "--config", cfg, "--embeddings", r + "/mech_embeddings.csv", "--out", r}).code == 0);
  REQUIRE(run({"evaluate", "--config", cfg, "--embeddings", r + "/hybrid_embeddings.csv", "--data", data, "--out", r})
              .code == 0);
  const auto rep = run({"report", "--config", cfg, "--run", r, "--data", data, "--out", (dir / "report").string()});
  INFO(rep.err);
  REQUIRE(rep.code == 0);
  return dir;
}

}  // namespace

TEST_CASE("usage errors exit 2 with usage text") {
  auto r = run({});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  r = run({"simulate", "--bogus"});
  CHECK(r.code == 2);
  CHECK(r.err.find("Usage") != std::string::npos);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train", "--data", "/nonexistent.csv", "--model", "hybrid"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("validation failures exit 2") {
  const fs::path dir = scratch("validation");
  std::ofstream(dir / "bad.cfg") << "cohort.noise_sd = -1\n";
  CHECK(run({"simulate", "--config", (dir / "bad.cfg").string(), "--out", dir.string()}).code == 2);

  std::ofstream(dir / "bad.csv") << "person_id,ppgr_id\np,r\n";
  CHECK(run({"features", "--data", (dir / "bad.csv").string(), "--out", dir.string()}).code == 2);

  std::ofstream(dir / "ok.cfg") << "seed = 1\n";
  REQUIRE(run({"simulate", "--config", (dir / "ok.cfg").string(), "--out", dir.string()}).code == 0);
  const auto res = run({"train", "--model", "svm", "--data", (dir / "cohort.csv").string(), "--out", dir.string()});
  CHECK(res.code == 2);
  CHECK(res.err.find("--model") != std::string::npos);
}

TEST_CASE("simulate is deterministic and seed-sensitive") {
  const fs::path dir = scratch("simulate");
  std::ofstream(dir / "c.cfg") << "group.prediabetes.persons = 2\ngroup.t2d.persons = 2\n";
  const std::string cfg = (dir / "c.cfg").string();
  for (const char* sub : {"a", "b"}) REQUIRE(run({"simulate", "--spec", cfg, "--seed", "7", "--out", (dir / sub).string()}).code == 0);
  REQUIRE(run({"simulate", "--spec", cfg, "--seed", "8", "--out", (dir / "c").string()}).code == 0);
  for (const char* f : {"cohort.csv", "truth.csv", "run.cfg"}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
  CHECK(read_file(dir / "a" / "cohort.csv") != read_file(dir / "c" / "cohort.csv"));
  CHECK(first_line(dir / "a" / "cohort.csv").rfind("# glyco config_hash=", 0) == 0);
  CHECK(first_line(dir / "a" / "cohort.csv").find("seed=7") != std::string::npos);
}

TEST_CASE("evaluate on one-hot label embeddings scores 1") {
  const fs::path dir = scratch("onehot");
  std::ofstream(dir / "c.cfg") << "group.prediabetes.persons = 3\ngroup.t2d.persons = 3\n"
                                  "group.prediabetes.records_per_person = 2\ngroup.t2d.records_per_person = 2\n";
  REQUIRE(run({"simulate", "--config", (dir / "c.cfg").string(), "--out", dir.string()}).code == 0);
  const glyco::Dataset data = glyco::load_csv(dir / "cohort.csv");
  glyco::EmbeddingTable t;
  t.columns = {"is_t2d", "is_pre"};
  for (const auto& r : data.records) {
    const bool t2d = r.diagnosis == glyco::Diagnosis::T2D;
    t.append(r.ppgr_id, r.person_id, std::vector<double>{t2d ? 1.0 : 0.0, t2d ? 0.0 : 1.0});
  }
  glyco::save_embedding_csv(dir / "onehot_embeddings.csv", t, {});
  const auto res = run({"evaluate", "--embeddings", (dir / "onehot_embeddings.csv").string(), "--data",
                        (dir / "cohort.csv").string(), "--out", dir.string()});
  REQUIRE(res.code == 0);
  const auto rep = glyco::report_from_json(read_file(dir / "onehot_report.json"));
  CHECK(rep.scores.nmi == 1.0);
  CHECK(rep.scores.ami == 1.0);
  CHECK(rep.scores.homogeneity == 1.0);
  CHECK(rep.scores.completeness == 1.0);
}

TEST_CASE("full pipeline emits every artifact, reproducibly") {
  const fs::path a = pipeline(scratch("pipe_a"));
  const fs::path b = pipeline(scratch("pipe_b"));

  const std::vector<std::string> produced = {
      "r/cohort.csv",          "r/truth.csv",          "r/hybrid.json",           "r/hybrid_curve.csv",
      "r/blackbox.json",       "r/tcl.json",           "r/mech_embeddings.csv",   "r/mech_fits.csv",
      "r/features_embeddings.csv", "r/raw_embeddings.csv", "r/hybrid_embeddings.csv", "r/blackbox_embeddings.csv",
      "r/tcl-average_embeddings.csv", "r/hybrid_reconstructions.csv", "r/mech_clusters.csv",
      "r/hybrid_report.json",  "report/scores.csv",    "report/reports/dtw.json", "report/reports/hybrid.json",
      "report/scatter/mech_G_b_vs_S_G.csv", "report/scatter/hybrid_G_b_vs_SI_MI.csv", "report/scatter/raw_pca.csv",
      "report/recon/reconstructions.csv"};
  for (const auto& f : produced) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    CHECK(read_file(a / f) == read_file(b / f));
    if (fs::path(f).extension() == ".csv") CHECK(first_line(a / f).rfind("# glyco config_hash=", 0) == 0);
    if (fs::path(f).extension() == ".json") CHECK(read_file(a / f).find("\"config_hash\"") != std::string::npos);
  }

  const std::string table = read_file(a / "report" / "scores.csv");
  for (const char* m : {"hybrid,7,", "mech,7,", "features,10,", "raw,60,", "dtw,60,", "blackbox,32,", "tcl-average,32,"}) {
    CHECK(table.find(m) != std::string::npos);
  }

  int svgs = 0;
  for (const auto& e : fs::directory_iterator(a / "report" / "recon")) {
    if (e.path().extension() != ".svg") continue;
    ++svgs;
    const std::string svg = read_file(e.path());
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(svg.find("config_hash=") != std::string::npos);
    CHECK(svg.find("observed") != std::string::npos);
    CHECK(svg.find("hybrid VAE") != std::string::npos);
    CHECK(svg.find("mechanistic fit") != std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
    CHECK(svg.find("<circle") != std::string::npos);
    CHECK(read_file(e.path()) == read_file(b / "report" / "recon" / e.path().filename()));
  }
  CHECK(svgs == 2);
}

TEST_CASE("subcommands leave their inputs untouched") {
  const fs::path dir = scratch("inputs");
  std::ofstream(dir / "c.cfg") << "group.prediabetes.persons = 2\ngroup.t2d.persons = 2\nmech.steps = 5\n";
  REQUIRE(run({"simulate", "--config", (dir / "c.cfg").string(), "--out", dir.string()}).code == 0);
  const std::string before = read_file(dir / "cohort.csv"), cfg = read_file(dir / "c.cfg");
  REQUIRE(run({"fit-mech", "--config", (dir / "c.cfg").string(), "--data", (dir / "cohort.csv").string(), "--out",
               dir.string()})
              .code == 0);
  CHECK(read_file(dir / "cohort.csv") == before);
  CHECK(read_file(dir / "c.cfg") == cfg);
}
