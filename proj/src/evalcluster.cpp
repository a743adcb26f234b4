#include "glyco/evalcluster.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "glyco/baselines.hpp"
#include "glyco/error.hpp"
#include "glyco/parallel.hpp"
#include "glyco/textio.hpp"

namespace glyco {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// --- embedding tables -----------------------------------------------------------

void EmbeddingTable::append(const std::string& ppgr_id, const std::string& person_id, std::span<const double> row) {
  if (columns.empty()) {
    for (std::size_t j = 0; j < row.size(); ++j) columns.push_back("e_" + std::to_string(j));
  }
  if (row.size() != columns.size()) throw Error(ErrorKind::LengthMismatch, "embedding row width differs from header");
  const auto n = static_cast<Eigen::Index>(ppgr_ids.size());
  values.conservativeResize(n + 1, static_cast<Eigen::Index>(columns.size()));
  for (std::size_t j = 0; j < row.size(); ++j) values(n, static_cast<Eigen::Index>(j)) = row[j];
  ppgr_ids.push_back(ppgr_id);
  person_ids.push_back(person_id);
}

EmbeddingTable read_embedding_csv(std::istream& in) {
  EmbeddingTable t;
  std::string line;
  bool header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv_line(line);
    if (!header) {
      if (cells.size() < 3 || cells[0] != "ppgr_id" || cells[1] != "person_id") {
        throw Error(ErrorKind::MissingColumn, "embedding header must start with ppgr_id,person_id");
      }
      t.columns.assign(cells.begin() + 2, cells.end());
      header = true;
      continue;
    }
    if (cells.size() != t.columns.size() + 2) {
      throw Error(ErrorKind::LengthMismatch, "line " + std::to_string(line_no) + ": expected " +
                                                 std::to_string(t.columns.size() + 2) + " cells");
    }
    std::vector<double> row;
    for (std::size_t j = 2; j < cells.size(); ++j) row.push_back(parse_real(cells[j], "line " + std::to_string(line_no) + " " + t.columns[j - 2]));
    t.append(cells[0], cells[1], row);
  }
  if (!header) throw Error(ErrorKind::MissingColumn, "embedding file has no header");
  return t;
}

EmbeddingTable load_embedding_csv(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  return read_embedding_csv(in);
}

void write_embedding_csv(std::ostream& out, const EmbeddingTable& t, const Provenance& prov) {
  out << provenance_line(prov) << "\nppgr_id,person_id";
  for (const auto& c : t.columns) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < t.size(); ++i) {
    out << t.ppgr_ids[i] << ',' << t.person_ids[i];
    for (Eigen::Index j = 0; j < t.values.cols(); ++j) out << ',' << format_real(t.values(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
}

void save_embedding_csv(const std::filesystem::path& path, const EmbeddingTable& table, const Provenance& prov) {
  std::ostringstream out;
  write_embedding_csv(out, table, prov);
  write_file(path, out.str());
}

std::vector<PersonEmbedding> aggregate_by_person(const EmbeddingTable& table) {
  std::map<std::string, PersonEmbedding> by;
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto& p = by[table.person_ids[i]];
    if (p.vector.empty()) {
      p.person_id = table.person_ids[i];
      p.vector.assign(static_cast<std::size_t>(table.values.cols()), 0.0);
    }
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
      p.vector[static_cast<std::size_t>(j)] += table.values(static_cast<Eigen::Index>(i), j);
    }
    ++p.n_records;
  }
  std::vector<PersonEmbedding> out;
  for (auto& [id, p] : by) {
    for (double& v : p.vector) v /= p.n_records;
    out.push_back(std::move(p));
  }
  return out;
}

std::map<std::string, std::string> person_labels(const Dataset& data) {
  std::map<std::string, std::string> out;
  for (const auto& r : data.records) {
    if (r.diagnosis) out[r.person_id] = to_string(*r.diagnosis);
  }
  return out;
}

// --- clustering -----------------------------------------------------------------

MatrixXd standardize(const MatrixXd& points) {
  MatrixXd z = points;
  if (points.rows() == 0) return z;
  const Eigen::RowVectorXd mean = points.colwise().mean();
  z.rowwise() -= mean;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(z.rows()));
    if (sd > 0.0) z.col(j) /= sd;
  }
  return z;
}

namespace {

struct Lloyd {
  std::vector<int> labels;
  double inertia = 0.0;
  MatrixXd centers;
};

Lloyd kmeans_once(const MatrixXd& x, int k, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  nn::Rng rng(seed);
  MatrixXd centers(k, x.cols());
  centers.row(0) = x.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  VectorXd nearest = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    for (Eigen::Index i = 0; i < n; ++i) nearest[i] = std::min(nearest[i], (x.row(i) - centers.row(c - 1)).squaredNorm());
    const double r = std::uniform_real_distribution<double>(0.0, nearest.sum())(rng);
    Eigen::Index pick = n - 1;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += nearest[i];
      if (r < acc) {
        pick = i;
        break;
      }
    }
    centers.row(c) = x.row(pick);
  }

  Lloyd res;
  res.labels.assign(static_cast<std::size_t>(n), -1);
  VectorXd dist(n);
  for (int it = 0; it < 300; ++it) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < k; ++c) {
        const double d = (x.row(i) - centers.row(c)).squaredNorm();
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      changed = changed || res.labels[static_cast<std::size_t>(i)] != best;
      res.labels[static_cast<std::size_t>(i)] = best;
      dist[i] = bd;
    }
    for (int c = 0; c < k; ++c) {
      if (std::find(res.labels.begin(), res.labels.end(), c) == res.labels.end()) {
        Eigen::Index far;
        dist.maxCoeff(&far);
        res.labels[static_cast<std::size_t>(far)] = c;
        dist[far] = 0.0;
        changed = true;
      }
    }
    if (!changed && it > 0) break;
    centers.setZero();
    VectorXd count = VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      centers.row(res.labels[static_cast<std::size_t>(i)]) += x.row(i);
      count[res.labels[static_cast<std::size_t>(i)]] += 1.0;
    }
    for (int c = 0; c < k; ++c) centers.row(c) /= count[c];
  }
  res.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) res.inertia += (x.row(i) - centers.row(res.labels[static_cast<std::size_t>(i)])).squaredNorm();
  res.centers = std::move(centers);
  return res;
}

std::vector<int> dense_codes(std::span<const int> labels, int* count = nullptr) {
  std::map<int, int> code;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) {
    auto it = code.find(l);
    if (it == code.end()) it = code.emplace(l, static_cast<int>(code.size())).first;
    out.push_back(it->second);
  }
  if (count) *count = static_cast<int>(code.size());
  return out;
}

}  // namespace

KMeansResult kmeans(const MatrixXd& points, int k, int n_init, std::uint64_t seed, bool zscore) {
  if (k < 1 || n_init < 1) throw Error(ErrorKind::InvalidConfig, "k and n_init must be positive");
  const MatrixXd x = zscore ? standardize(points) : points;
  std::vector<std::vector<double>> distinct;
  for (Eigen::Index i = 0; i < x.rows() && static_cast<int>(distinct.size()) < k; ++i) {
    std::vector<double> row(static_cast<std::size_t>(x.cols()));
    for (Eigen::Index j = 0; j < x.cols(); ++j) row[static_cast<std::size_t>(j)] = x(i, j);
    if (std::find(distinct.begin(), distinct.end(), row) == distinct.end()) distinct.push_back(std::move(row));
  }
  if (static_cast<int>(distinct.size()) < k) {
    throw Error(ErrorKind::DegenerateInput, "k-means needs at least " + std::to_string(k) + " distinct points");
  }
  std::vector<Lloyd> runs(static_cast<std::size_t>(n_init));
  parallel_for(runs.size(), [&](std::size_t r) { runs[r] = kmeans_once(x, k, derive_seed(seed, r)); });
  KMeansResult out;
  std::size_t best = 0;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    out.restart_inertia.push_back(runs[r].inertia);
    if (runs[r].inertia < runs[best].inertia) best = r;
  }
  out.inertia = runs[best].inertia;
  int used = 0;
  std::vector<int> order(static_cast<std::size_t>(k), -1);
  for (int l : runs[best].labels) {
    if (order[static_cast<std::size_t>(l)] < 0) order[static_cast<std::size_t>(l)] = used++;
  }
  out.centers.resize(k, x.cols());
  for (int c = 0; c < k; ++c) {
    if (order[static_cast<std::size_t>(c)] < 0) order[static_cast<std::size_t>(c)] = used++;
    out.centers.row(order[static_cast<std::size_t>(c)]) = runs[best].centers.row(c);
  }
  for (int l : runs[best].labels) out.labels.push_back(order[static_cast<std::size_t>(l)]);
  return out;
}

double expected_mutual_information(std::span<const int> a, std::span<const int> b) {
  const int n = std::accumulate(a.begin(), a.end(), 0);
  const double N = n;
  double emi = 0.0;
  for (int ai : a) {
    for (int bj : b) {
      const double fixed = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) + std::lgamma(N - ai + 1.0) +
                           std::lgamma(N - bj + 1.0) - std::lgamma(N + 1.0);
      for (int nij = std::max(1, ai + bj - n); nij <= std::min(ai, bj); ++nij) {
        const double log_p = fixed - std::lgamma(nij + 1.0) - std::lgamma(ai - nij + 1.0) -
                             std::lgamma(bj - nij + 1.0) - std::lgamma(N - ai - bj + nij + 1.0);
        emi += nij / N * std::log(N * nij / (static_cast<double>(ai) * bj)) * std::exp(log_p);
      }
    }
  }
  return emi;
}

ClusterScores cluster_scores(std::span<const int> truth, std::span<const int> pred, Normalization norm) {
  if (truth.size() != pred.size()) throw Error(ErrorKind::LengthMismatch, "label vectors differ in length");
  if (truth.empty()) throw Error(ErrorKind::DegenerateInput, "cannot score empty labelings");
  int nc = 0, nk = 0;
  const auto c = dense_codes(truth, &nc);
  const auto k = dense_codes(pred, &nk);
  const double N = static_cast<double>(c.size());
  std::vector<std::vector<int>> table(static_cast<std::size_t>(nc), std::vector<int>(static_cast<std::size_t>(nk), 0));
  std::vector<int> a(static_cast<std::size_t>(nc), 0), b(static_cast<std::size_t>(nk), 0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    ++table[static_cast<std::size_t>(c[i])][static_cast<std::size_t>(k[i])];
    ++a[static_cast<std::size_t>(c[i])];
    ++b[static_cast<std::size_t>(k[i])];
  }
  auto entropy = [&](const std::vector<int>& counts) {
    double h = 0.0;
    for (int x : counts)
      if (x > 0) h -= x / N * std::log(x / N);
    return h;
  };
  const double hc = entropy(a), hk = entropy(b);
  double mi = 0.0;
  for (int i = 0; i < nc; ++i) {
    for (int j = 0; j < nk; ++j) {
      const int nij = table[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      if (nij > 0) mi += nij / N * std::log(N * nij / (static_cast<double>(a[static_cast<std::size_t>(i)]) * b[static_cast<std::size_t>(j)]));
    }
  }
  mi = std::max(mi, 0.0);

  ClusterScores s;
  s.homogeneity = hc == 0.0 ? 1.0 : mi / hc;
  s.completeness = hk == 0.0 ? 1.0 : mi / hk;
  const bool identical = c == k;
  if (identical) {
    s.nmi = s.ami = s.ami_raw = 1.0;
    return s;
  }
  if (hc == 0.0 || hk == 0.0) return s;  // nmi = ami = 0
  const double denom_h = norm == Normalization::Arithmetic ? 0.5 * (hc + hk) : std::sqrt(hc * hk);
  s.nmi = mi / denom_h;
  const double emi = expected_mutual_information(a, b);
  const double denom = denom_h - emi;
  s.ami_raw = std::abs(denom) < 1e-15 ? 0.0 : (mi - emi) / denom;
  s.ami = std::clamp(s.ami_raw, 0.0, 1.0);
  return s;
}

PcaResult pca_project(const MatrixXd& points, int dims) {
  if (points.rows() < 2) throw Error(ErrorKind::DegenerateInput, "PCA needs at least two points");
  if (dims < 1 || dims > points.cols()) throw Error(ErrorKind::InvalidConfig, "PCA dims must be in [1, d]");
  const MatrixXd centered = points.rowwise() - points.colwise().mean();
  const MatrixXd cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(cov);
  PcaResult r;
  r.total_variance = cov.trace();
  r.components.resize(points.cols(), dims);
  r.explained_variance.resize(dims);
  for (int c = 0; c < dims; ++c) {
    const Eigen::Index idx = points.cols() - 1 - c;  // eigenvalues ascend
    VectorXd v = eig.eigenvectors().col(idx);
    Eigen::Index big;
    v.cwiseAbs().maxCoeff(&big);
    if (v[big] < 0.0) v = -v;
    r.components.col(c) = v;
    r.explained_variance[c] = std::max(eig.eigenvalues()[idx], 0.0);
  }
  r.projected = centered * r.components;
  return r;
}

namespace {

std::vector<double> ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t m = i; m <= j; ++m) r[idx[m]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "spearman inputs differ in length");
  if (a.size() < 2) throw Error(ErrorKind::DegenerateInput, "spearman needs two or more points");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double linear_separability(const MatrixXd& points, std::span<const int> labels) {
  if (points.cols() != 2 || static_cast<std::size_t>(points.rows()) != labels.size()) {
    throw Error(ErrorKind::LengthMismatch, "separability needs n x 2 points and n labels");
  }
  const Eigen::Index n = points.rows();
  if (n == 0) return 0.0;
  std::vector<Eigen::Vector2d> normals{{1.0, 0.0}, {0.0, 1.0}};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Eigen::Vector2d d = (points.row(j) - points.row(i)).transpose();
      if (d.norm() == 0.0) continue;
      // Lines through two points, nudged so either point can fall on each side.
      for (double eps : {-1e-7, 1e-7}) {
        const double a = std::atan2(d.y(), d.x()) + eps;
        normals.emplace_back(-std::sin(a), std::cos(a));
      }
    }
  }
  std::vector<std::pair<double, int>> proj(static_cast<std::size_t>(n));
  int best = 0;
  for (const auto& w : normals) {
    for (Eigen::Index i = 0; i < n; ++i) {
      proj[static_cast<std::size_t>(i)] = {points.row(i).dot(w.transpose()), labels[static_cast<std::size_t>(i)] == labels[0] ? 1 : 0};
    }
    std::sort(proj.begin(), proj.end());
    const int total_first = static_cast<int>(std::count_if(proj.begin(), proj.end(), [](const auto& p) { return p.second == 1; }));
    int below_first = 0;
    for (Eigen::Index cut = 0; cut <= n; ++cut) {
      if (cut == 0 || cut == n || proj[static_cast<std::size_t>(cut - 1)].first != proj[static_cast<std::size_t>(cut)].first) {
        const int below = static_cast<int>(cut);
        // first class below the cut, the rest above (or the reverse).
        const int right = below_first + (static_cast<int>(n) - below - (total_first - below_first));
        best = std::max({best, right, static_cast<int>(n) - right});
      }
      if (cut < n) below_first += proj[static_cast<std::size_t>(cut)].second;
    }
  }
  return static_cast<double>(best) / static_cast<double>(n);
}

// --- reports --------------------------------------------------------------------

ClusterReport evaluate_method(const std::string& method, const EmbeddingTable& table,
                              const std::map<std::string, std::string>& labels, const EvalOptions& opts) {
  const auto persons = aggregate_by_person(table);
  if (persons.empty()) throw Error(ErrorKind::DegenerateInput, "no embeddings to evaluate");
  ClusterReport r;
  r.method = method;
  r.k = opts.k;
  r.dim = static_cast<int>(table.columns.size());
  std::set<std::string> classes;
  for (const auto& p : persons) {
    const auto it = labels.find(p.person_id);
    if (it == labels.end()) throw Error(ErrorKind::MissingLabel, "person " + p.person_id + " has no label");
    r.person_ids.push_back(p.person_id);
    r.n_records.push_back(p.n_records);
    r.truth.push_back(it->second);
    classes.insert(it->second);
  }
  r.classes.assign(classes.begin(), classes.end());
  std::vector<int> truth;
  for (const auto& t : r.truth) {
    truth.push_back(static_cast<int>(std::find(r.classes.begin(), r.classes.end(), t) - r.classes.begin()));
  }

  MatrixXd x(static_cast<Eigen::Index>(persons.size()), r.dim);
  for (std::size_t i = 0; i < persons.size(); ++i)
    for (int j = 0; j < r.dim; ++j) x(static_cast<Eigen::Index>(i), j) = persons[i].vector[static_cast<std::size_t>(j)];

  if (opts.dtw) {
    std::vector<std::vector<double>> series;
    for (const auto& p : persons) series.push_back(p.vector);
    auto res = dtw_kmeans(series, opts.k, opts.n_init, opts.seed);
    r.labels = std::move(res.labels);
    r.inertia = res.inertia;
  } else {
    auto res = kmeans(x, opts.k, opts.n_init, opts.seed, true);
    r.labels = std::move(res.labels);
    r.inertia = res.inertia;
  }
  r.scores = cluster_scores(truth, r.labels, opts.normalization);
  r.contingency.assign(r.classes.size(), std::vector<int>(static_cast<std::size_t>(opts.k), 0));
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ++r.contingency[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(r.labels[i])];
  }
  if (r.classes.size() == 2 && persons.size() >= 3 && r.dim >= 1) {
    MatrixXd plane = MatrixXd::Zero(x.rows(), 2);
    const int dims = std::min(2, r.dim);
    plane.leftCols(dims) = pca_project(standardize(x), dims).projected;
    r.linear_separability = linear_separability(plane, truth);
  }
  return r;
}

namespace {
using Json = nlohmann::ordered_json;
}

std::string report_to_json(const ClusterReport& r, const Provenance& prov) {
  Json j;
  j["glyco"] = {{"config_hash", prov.config_hash}, {"seed", prov.seed}};
  j["method"] = r.method;
  j["k"] = r.k;
  j["dim"] = r.dim;
  j["scores"] = {{"nmi", r.scores.nmi},
                 {"ami", r.scores.ami},
                 {"homogeneity", r.scores.homogeneity},
                 {"completeness", r.scores.completeness}};
  Json diag = {{"ami_raw", r.scores.ami_raw}, {"inertia", r.inertia}};
  if (r.linear_separability) diag["linear_separability"] = *r.linear_separability;
  j["diagnostics"] = std::move(diag);
  j["classes"] = r.classes;
  j["contingency"] = r.contingency;
  Json persons = Json::array();
  for (std::size_t i = 0; i < r.person_ids.size(); ++i) {
    persons.push_back({{"person_id", r.person_ids[i]},
                       {"label", r.truth[i]},
                       {"cluster", r.labels[i]},
                       {"n_records", r.n_records[i]}});
  }
  j["persons"] = std::move(persons);
  return j.dump(1) + "\n";
}

ClusterReport report_from_json(const std::string& text) {
  try {
    const Json j = Json::parse(text);
    ClusterReport r;
    r.method = j.at("method").get<std::string>();
    r.k = j.at("k").get<int>();
    r.dim = j.at("dim").get<int>();
    const auto& s = j.at("scores");
    r.scores.nmi = s.at("nmi").get<double>();
    r.scores.ami = s.at("ami").get<double>();
    r.scores.homogeneity = s.at("homogeneity").get<double>();
    r.scores.completeness = s.at("completeness").get<double>();
    const auto& d = j.at("diagnostics");
    r.scores.ami_raw = d.at("ami_raw").get<double>();
    r.inertia = d.at("inertia").get<double>();
    if (d.contains("linear_separability")) r.linear_separability = d.at("linear_separability").get<double>();
    r.classes = j.at("classes").get<std::vector<std::string>>();
    r.contingency = j.at("contingency").get<std::vector<std::vector<int>>>();
    for (const auto& p : j.at("persons")) {
      r.person_ids.push_back(p.at("person_id").get<std::string>());
      r.truth.push_back(p.at("label").get<std::string>());
      r.labels.push_back(p.at("cluster").get<int>());
      r.n_records.push_back(p.at("n_records").get<int>());
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("malformed cluster report: ") + e.what());
  }
}

std::string summary_csv(const std::vector<ClusterReport>& reports, const Provenance& prov) {
  std::ostringstream out;
  out << provenance_line(prov) << "\nmethod,dim,NMI,AMI,Hom.,Comp.\n";
  for (const auto& r : reports) {
    out << r.method << ',' << r.dim << ',' << format_real(r.scores.nmi) << ',' << format_real(r.scores.ami) << ','
        << format_real(r.scores.homogeneity) << ',' << format_real(r.scores.completeness) << '\n';
  }
  return out.str();
}

}  // namespace glyco
