#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "glyco/datamodel.hpp"

namespace glyco {

// --- embedding tables -----------------------------------------------------------

/// One row per PPGR: `ppgr_id,person_id,<columns...>`.
struct EmbeddingTable {
  std::vector<std::string> columns;
  std::vector<std::string> ppgr_ids;
  std::vector<std::string> person_ids;
  Eigen::MatrixXd values;

  std::size_t size() const { return ppgr_ids.size(); }
  void append(const std::string& ppgr_id, const std::string& person_id, std::span<const double> row);
};

EmbeddingTable read_embedding_csv(std::istream& in);
EmbeddingTable load_embedding_csv(const std::filesystem::path& path);
void write_embedding_csv(std::ostream& out, const EmbeddingTable& table, const Provenance& prov);
void save_embedding_csv(const std::filesystem::path& path, const EmbeddingTable& table, const Provenance& prov);

struct PersonEmbedding {
  std::string person_id;
  std::vector<double> vector;
  int n_records = 0;
};

/// Mean embedding per person, sorted by person id.
std::vector<PersonEmbedding> aggregate_by_person(const EmbeddingTable& table);

/// person_id -> diagnosis name, from a dataset.
std::map<std::string, std::string> person_labels(const Dataset& data);

// --- clustering -----------------------------------------------------------------

/// Columns shifted to mean 0 and scaled to sd 1 (constant columns only centered).
Eigen::MatrixXd standardize(const Eigen::MatrixXd& points);

struct KMeansResult {
  std::vector<int> labels;
  double inertia = 0.0;
  std::vector<double> restart_inertia;
  Eigen::MatrixXd centers;
};

/// Lloyd with k-means++ seeding, best of n_init restarts. Points are
/// z-scored first when `zscore` is set. Labels are numbered by first
/// appearance.
KMeansResult kmeans(const Eigen::MatrixXd& points, int k = 2, int n_init = 10, std::uint64_t seed = 0,
                    bool zscore = true);

enum class Normalization { Arithmetic, Geometric };

struct ClusterScores {
  double nmi = 0.0;
  double ami = 0.0;  // clamped to [0, 1]
  double ami_raw = 0.0;
  double homogeneity = 0.0;
  double completeness = 0.0;
};

/// Natural-log entropies; E[MI] under the hypergeometric model.
ClusterScores cluster_scores(std::span<const int> truth, std::span<const int> pred,
                             Normalization norm = Normalization::Arithmetic);

double expected_mutual_information(std::span<const int> row_sums, std::span<const int> col_sums);

struct PcaResult {
  Eigen::MatrixXd projected;           // n x dims
  Eigen::MatrixXd components;          // d x dims, unit columns
  Eigen::VectorXd explained_variance;  // per component
  double total_variance = 0.0;
};

PcaResult pca_project(const Eigen::MatrixXd& points, int dims = 2);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

/// Best accuracy of any straight line separating two classes of 2-D points.
double linear_separability(const Eigen::MatrixXd& points, std::span<const int> labels);

// --- reports --------------------------------------------------------------------

struct ClusterReport {
  std::string method;
  int k = 2;
  int dim = 0;
  std::vector<std::string> person_ids;
  std::vector<int> n_records;
  std::vector<int> labels;
  std::vector<std::string> truth;
  std::vector<std::string> classes;
  std::vector<std::vector<int>> contingency;  // classes x clusters
  ClusterScores scores;
  double inertia = 0.0;
  std::optional<double> linear_separability;  // on the person-mean PCA plane
};

struct EvalOptions {
  int k = 2;
  int n_init = 10;
  std::uint64_t seed = 0;
  Normalization normalization = Normalization::Arithmetic;
  bool dtw = false;  // cluster per-person mean traces with DTW k-means
};

/// Person aggregation, clustering and scoring. Throws MissingLabel when a
/// person has no label.
ClusterReport evaluate_method(const std::string& method, const EmbeddingTable& table,
                              const std::map<std::string, std::string>& labels, const EvalOptions& opts);

std::string report_to_json(const ClusterReport& report, const Provenance& prov);
ClusterReport report_from_json(const std::string& text);
/// Table of NMI, AMI, Hom., Comp. per method.
std::string summary_csv(const std::vector<ClusterReport>& reports, const Provenance& prov);

}  // namespace glyco
