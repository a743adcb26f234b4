#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "glyco/error.hpp"
#include "glyco/evalcluster.hpp"
#include "oracles.hpp"

using namespace glyco;
using Eigen::MatrixXd;

namespace {

void check_against_oracle(const std::vector<int>& t, const std::vector<int>& p) {
  const auto got = cluster_scores(t, p);
  const auto want = oracle::scores(t, p);
  CHECK(std::abs(got.nmi - want.nmi) < 1e-9);
  CHECK(std::abs(got.ami - want.ami) < 1e-9);
  CHECK(std::abs(got.homogeneity - want.homogeneity) < 1e-9);
  CHECK(std::abs(got.completeness - want.completeness) < 1e-9);
}

}  // namespace

TEST_CASE("score conventions") {
  const std::vector<int> a{0, 0, 1, 1};
  auto s = cluster_scores(a, a);
  CHECK(s.nmi == 1.0);
  CHECK(s.ami == 1.0);
  CHECK(s.homogeneity == 1.0);
  CHECK(s.completeness == 1.0);

  const std::vector<int> one{0, 0, 0, 0};
  s = cluster_scores(a, one);
  CHECK(s.nmi == 0.0);
  CHECK(s.ami == 0.0);
  CHECK(s.homogeneity == 0.0);
  CHECK(s.completeness == 1.0);

  const std::vector<int> renamed{7, 7, 3, 3};
  CHECK(cluster_scores(a, renamed).nmi == 1.0);
  CHECK_THROWS_AS(cluster_scores(a, std::vector<int>{0, 1}), Error);
}

TEST_CASE("four point example against the brute-force oracle") {
  check_against_oracle({0, 0, 1, 1}, {0, 0, 1, 0});
  const auto s = cluster_scores(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 0, 1, 0});
  // Hand value: MI = H(C) - H(C|K) with H(C|K) = 3/4 * H(2/3, 1/3).
  const double hc = std::log(2.0);
  const double hck = 0.75 * -(2.0 / 3 * std::log(2.0 / 3) + 1.0 / 3 * std::log(1.0 / 3));
  CHECK(s.homogeneity == doctest::Approx((hc - hck) / hc));
}

TEST_CASE("every labeling of up to five points matches the oracle") {
  for (int n = 1; n <= 5; ++n) {
    const auto parts = oracle::set_partitions(n);
    for (const auto& t : parts)
      for (const auto& p : parts) check_against_oracle(t, p);
  }
}

TEST_CASE("scores ignore cluster names") {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> lab(0, 2);
  for (int k = 0; k < 50; ++k) {
    std::vector<int> t(12), p(12), q(12);
    for (auto& x : t) x = lab(rng);
    for (auto& x : p) x = lab(rng);
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = (p[i] + 1) % 3;
    const auto a = cluster_scores(t, p), b = cluster_scores(t, q);
    CHECK(a.nmi == doctest::Approx(b.nmi));
    CHECK(a.ami_raw == doctest::Approx(b.ami_raw));
    CHECK(a.homogeneity == doctest::Approx(b.homogeneity));
    CHECK(a.completeness == doctest::Approx(b.completeness));
    CHECK(a.ami >= 0.0);
    CHECK(a.nmi <= 1.0 + 1e-12);
  }
}

TEST_CASE("kmeans") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.1);
  MatrixXd x(20, 1);
  for (int i = 0; i < 20; ++i) x(i, 0) = (i < 10 ? 0.0 : 10.0) + noise(rng);
  const auto r = kmeans(x, 2, 10, 3);
  for (int i = 0; i < 20; ++i) CHECK(r.labels[i] == (i < 10 ? 0 : 1));
  for (double v : r.restart_inertia) CHECK(r.inertia <= v);
  CHECK(kmeans(x, 2, 10, 3).labels == r.labels);

  MatrixXd few(4, 2);
  few << 0, 0, 1, 0, 0, 1, 5, 5;
  CHECK(kmeans(few, 4, 3, 1).inertia == doctest::Approx(0.0));
  MatrixXd same = MatrixXd::Ones(5, 2);
  CHECK_THROWS_AS(kmeans(same, 2, 3, 1), Error);
}

TEST_CASE("pca") {
  MatrixXd line(10, 3);
  for (int i = 0; i < 10; ++i) line.row(i) << i, 2.0 * i, -1.0 * i;
  const auto p = pca_project(line, 2);
  CHECK(p.explained_variance[0] / p.total_variance == doctest::Approx(1.0));
  CHECK(p.explained_variance[1] == doctest::Approx(0.0).epsilon(1e-9));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0.0, 1.0);
  MatrixXd pts(200, 2);
  for (int i = 0; i < 200; ++i) pts.row(i) << n(rng), n(rng);
  const auto q = pca_project(pts, 2);
  const MatrixXd back = q.projected * q.components.transpose();
  const MatrixXd centered = pts.rowwise() - pts.colwise().mean();
  CHECK((back - centered).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(std::abs(q.explained_variance.sum() - q.total_variance) < 1e-9);
  for (int c = 0; c < 2; ++c) {
    Eigen::Index big;
    q.components.col(c).cwiseAbs().maxCoeff(&big);
    CHECK(q.components(big, c) > 0.0);
  }
}

TEST_CASE("spearman and separability") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{10, 20, 25, 100, 1000}, c{5, 4, 3, 2, 1};
  CHECK(spearman(a, b) == doctest::Approx(1.0));
  CHECK(spearman(a, c) == doctest::Approx(-1.0));
  const std::vector<double> ties{1, 1, 2, 2, 3};
  CHECK(spearman(ties, a) == doctest::Approx(0.9486832980505138));

  MatrixXd xor4(4, 2);
  xor4 << 0, 0, 1, 1, 0, 1, 1, 0;
  const std::vector<int> xl{0, 0, 1, 1};
  CHECK(linear_separability(xor4, xl) == doctest::Approx(0.75));
  MatrixXd sep(4, 2);
  sep << 0, 0, 0, 1, 3, 0, 3, 1;
  CHECK(linear_separability(sep, xl) == 1.0);
}

TEST_CASE("evaluate method and reports") {
  EmbeddingTable t;
  std::map<std::string, std::string> labels;
  for (int p = 0; p < 6; ++p) {
    const std::string pid = "p" + std::to_string(p);
    labels[pid] = p < 3 ? "T2D" : "prediabetes";
    for (int r = 0; r < 2; ++r) {
      const double row[2] = {p < 3 ? 1.0 : 0.0, p < 3 ? 0.0 : 1.0};
      t.append(pid + "_r" + std::to_string(r), pid, row);
    }
  }
  EvalOptions o;
  o.seed = 2;
  const auto rep = evaluate_method("onehot", t, labels, o);
  CHECK(rep.scores.nmi == 1.0);
  CHECK(rep.scores.ami == 1.0);
  CHECK(rep.scores.homogeneity == 1.0);
  CHECK(rep.scores.completeness == 1.0);
  CHECK(rep.n_records[0] == 2);
  CHECK(*rep.linear_separability == 1.0);
  int total = 0;
  for (const auto& row : rep.contingency)
    for (int v : row) total += v;
  CHECK(total == 6);

  const auto back = report_from_json(report_to_json(rep, Provenance{"abc", 2}));
  CHECK(back.labels == rep.labels);
  CHECK(back.scores.nmi == rep.scores.nmi);
  CHECK(back.contingency == rep.contingency);
  const auto csv = summary_csv({rep}, Provenance{"abc", 2});
  CHECK(csv.find("method,dim,NMI,AMI,Hom.,Comp.\nonehot,2,1,1,1,1\n") != std::string::npos);
  CHECK(csv.rfind("# glyco config_hash=abc seed=2", 0) == 0);

  std::ostringstream out;
  write_embedding_csv(out, t, Provenance{});
  std::istringstream in(out.str());
  const auto t2 = read_embedding_csv(in);
  CHECK(t2.values == t.values);
  CHECK(t2.person_ids == t.person_ids);

  labels.erase("p5");
  CHECK_THROWS_AS(evaluate_method("onehot", t, labels, o), Error);
}

TEST_CASE("random embeddings score near zero AMI") {
  double sum = 0.0;
  for (int s = 0; s < 20; ++s) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(s));
    std::normal_distribution<double> n(0.0, 1.0);
    EmbeddingTable t;
    std::map<std::string, std::string> labels;
    for (int p = 0; p < 30; ++p) {
      const std::string pid = "p" + std::to_string(p);
      labels[pid] = p % 2 ? "a" : "b";
      const double row[3] = {n(rng), n(rng), n(rng)};
      t.append(pid + "_r0", pid, row);
    }
    EvalOptions o;
    o.seed = static_cast<std::uint64_t>(s);
    sum += std::abs(evaluate_method("random", t, labels, o).scores.ami_raw);
  }
  CHECK(sum / 20.0 < 0.15);
}

TEST_CASE("dtw evaluation path") {
  EmbeddingTable t;
  std::map<std::string, std::string> labels;
  for (int p = 0; p < 6; ++p) {
    const std::string pid = "p" + std::to_string(p);
    labels[pid] = p < 3 ? "x" : "y";
    std::vector<double> trace(20);
    for (int i = 0; i < 20; ++i) trace[i] = (p < 3 ? 100.0 : 180.0) + 10.0 * std::sin(i / 3.0 + p);
    t.append(pid + "_r0", pid, trace);
  }
  EvalOptions o;
  o.dtw = true;
  CHECK(evaluate_method("dtw", t, labels, o).scores.nmi == 1.0);
}
