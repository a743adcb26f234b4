#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "glyco/baselines.hpp"
#include "glyco/checkpoint.hpp"
#include "glyco/cli.hpp"
#include "glyco/datamodel.hpp"
#include "glyco/error.hpp"
#include "glyco/evalcluster.hpp"
#include "glyco/features.hpp"
#include "glyco/hybridvae.hpp"
#include "glyco/mechsim.hpp"
#include "glyco/textio.hpp"

namespace py = pybind11;
using namespace glyco;

namespace {

template <std::size_t N>
std::array<double, N> fixed(const std::vector<double>& v, const char* what) {
  if (v.size() != N) throw py::value_error(std::string(what) + " must have " + std::to_string(N) + " values");
  std::array<double, N> a{};
  std::copy(v.begin(), v.end(), a.begin());
  return a;
}

template <std::size_t N>
py::dict named(const std::array<const char*, N>& names, const std::array<double, N>& values) {
  py::dict d;
  for (std::size_t i = 0; i < N; ++i) d[names[i]] = values[i];
  return d;
}

py::dict scores_dict(const ClusterScores& s) {
  py::dict d;
  d["nmi"] = s.nmi;
  d["ami"] = s.ami;
  d["homogeneity"] = s.homogeneity;
  d["completeness"] = s.completeness;
  return d;
}

Dataset cohort_from_text(const std::string& config_text, std::uint64_t seed) {
  const auto spec = CohortSpec::from_config(KeyValueConfig::parse(config_text));
  spec.validate();
  return generate_cohort(spec, seed).data;
}

}  // namespace

PYBIND11_MODULE(_glyco, m) {
  m.doc() = "Hybrid mechanistic VAE embeddings of post-prandial glucose responses";

  py::register_exception<Error>(m, "GlycoError", PyExc_ValueError);

  py::class_<PpgrRecord>(m, "Record")
      .def_readonly("person_id", &PpgrRecord::person_id)
      .def_readonly("ppgr_id", &PpgrRecord::ppgr_id)
      .def_property_readonly("glucose",
                             [](const PpgrRecord& r) {
                               return std::vector<std::optional<double>>(r.glucose.begin(), r.glucose.end());
                             })
      .def_property_readonly("carbs",
                             [](const PpgrRecord& r) {
                               const auto c = logged_carbs(r);
                               return std::vector<double>(c.begin(), c.end());
                             })
      .def_property_readonly("diagnosis",
                             [](const PpgrRecord& r) -> std::optional<std::string> {
                               if (!r.diagnosis) return std::nullopt;
                               return std::string(to_string(*r.diagnosis));
                             })
      .def("__repr__", [](const PpgrRecord& r) { return "<Record " + r.ppgr_id + " of " + r.person_id + ">"; });

  py::class_<Dataset>(m, "Dataset")
      .def_readonly("records", &Dataset::records)
      .def("person_ids", &Dataset::person_ids)
      .def("__len__", [](const Dataset& d) { return d.records.size(); })
      .def("save", [](const Dataset& d, const std::filesystem::path& path) { save_csv(path, d, Provenance{}); });

  m.def("load_csv", &load_csv, py::arg("path"));
  m.def("generate_cohort", &cohort_from_text, py::arg("config") = "", py::arg("seed") = 0,
        "Synthetic cohort from flat `key = value` config text.");

  m.def(
      "simulate",
      [](const std::vector<double>& x0, const std::vector<double>& params, const std::vector<double>& u, int substeps,
         double V_G) {
        SimConfig cfg;
        cfg.substeps = substeps;
        cfg.V_G = V_G;
        const auto s = fixed<4>(x0, "x0");
        const auto w = fixed<6>(params, "params");
        const auto g = glucose_of(simulate(MechState::from_array(s), MechParams::from_array(w), fixed<kSeqLen>(u, "u"), cfg));
        return std::vector<double>(g.begin(), g.end());
      },
      py::arg("x0"), py::arg("params"), py::arg("u"), py::arg("substeps") = 5, py::arg("V_G") = 100.0,
      "Glucose at the 60 observation times. x0 = (G, X, G1, G2); params = (tau_m, G_b, S_G, p_2, S_I, M_I).");
  m.def(
      "carbs_to_rate",
      [](const std::vector<double>& grams) {
        const auto g = fixed<kSeqLen>(grams, "grams");
        const auto u = carbs_to_rate(std::span<const double, kSeqLen>(g));
        return std::vector<double>(u.begin(), u.end());
      },
      py::arg("grams"));

  m.def(
      "expert_features",
      [](const std::vector<double>& glucose) {
        const auto g = fixed<kSeqLen>(glucose, "glucose");
        return named(ExpertFeatures::kNames, expert_features(std::span<const double, kSeqLen>(g)).to_array());
      },
      py::arg("glucose"));

  m.def(
      "dtw_distance",
      [](const std::vector<double>& a, const std::vector<double>& b) { return dtw_distance(a, b); },
      py::arg("a"), py::arg("b"));
  m.def(
      "dtw_kmeans",
      [](const std::vector<std::vector<double>>& series, int k, int n_init, std::uint64_t seed) {
        const auto r = dtw_kmeans(series, k, n_init, seed);
        return py::make_tuple(r.labels, r.inertia);
      },
      py::arg("series"), py::arg("k") = 2, py::arg("n_init") = 10, py::arg("seed") = 0);

  m.def(
      "kmeans",
      [](const Eigen::MatrixXd& points, int k, int n_init, std::uint64_t seed, bool zscore) {
        const auto r = kmeans(points, k, n_init, seed, zscore);
        return py::make_tuple(r.labels, r.inertia);
      },
      py::arg("points"), py::arg("k") = 2, py::arg("n_init") = 10, py::arg("seed") = 0, py::arg("zscore") = true);
  m.def(
      "cluster_scores",
      [](const std::vector<int>& truth, const std::vector<int>& pred, const std::string& normalization) {
        if (normalization != "arithmetic" && normalization != "geometric")
          throw py::value_error("normalization must be arithmetic or geometric");
        return scores_dict(cluster_scores(truth, pred,
                                          normalization == "geometric" ? Normalization::Geometric
                                                                       : Normalization::Arithmetic));
      },
      py::arg("truth"), py::arg("pred"), py::arg("normalization") = "arithmetic");

  m.def(
      "fit_mechanistic",
      [](const PpgrRecord& r, int steps, double lr) {
        MechFitOptions o;
        o.steps = steps;
        o.lr = lr;
        const auto f = fit_mechanistic(r, o);
        py::dict d;
        d["params"] = named(std::array<const char*, 6>{"tau_m", "G_b", "S_G", "p_2", "S_I", "M_I"}, f.params.to_array());
        d["rmse"] = std::sqrt(f.mse);
        d["initial_rmse"] = std::sqrt(f.initial_mse);
        d["embedding"] = named(MechEmbedding::kNames, f.embedding);
        return d;
      },
      py::arg("record"), py::arg("steps") = 2000, py::arg("lr") = 0.01);

  py::class_<HybridModel>(m, "HybridModel")
      .def(
          "embed",
          [](const HybridModel& model, const PpgrRecord& r) { return named(MechEmbedding::kNames, model.embed(r).values); },
          py::arg("record"))
      .def(
          "reconstruct",
          [](const HybridModel& model, const PpgrRecord& r) {
            const auto rec = model.reconstruct(r);
            return py::make_tuple(std::vector<double>(rec.glucose.begin(), rec.glucose.end()),
                                  std::vector<double>(rec.u.begin(), rec.u.end()));
          },
          py::arg("record"))
      .def_property_readonly("sigma_obs", &HybridModel::sigma_obs)
      .def_property_readonly("parameter_count", [](const HybridModel& model) { return model.parameters().count(); })
      .def(
          "save",
          [](const HybridModel& model, const std::filesystem::path& path, std::uint64_t seed) {
            save_checkpoint(path, hybrid_checkpoint(model, nn::AdamState{}, seed));
          },
          py::arg("path"), py::arg("seed") = 0);

  m.def(
      "train_hybrid",
      [](const Dataset& data, int epochs, int batch, double lr, double beta_hat, std::uint64_t seed) {
        HybridModel model(HybridConfig{}, InputNormalizer::fit(data), seed);
        TrainOptions o;
        o.epochs = epochs;
        o.batch = batch;
        o.lr = lr;
        o.beta_hat = beta_hat;
        o.seed = seed + 1;
        py::gil_scoped_release release;
        const auto res = train(data, model, o);
        std::vector<double> curve;
        for (const auto& s : res.curve) curve.push_back(s.elbo);
        return std::make_pair(std::move(model), curve);
      },
      py::arg("data"), py::arg("epochs") = 100, py::arg("batch") = 64, py::arg("lr") = 0.01, py::arg("beta_hat") = 0.01,
      py::arg("seed") = 0, "Returns (model, per-epoch mean ELBO).");
  m.def(
      "load_hybrid", [](const std::filesystem::path& path) { return hybrid_from_checkpoint(load_checkpoint(path)); },
      py::arg("path"));

  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Runs a glyco subcommand; returns (exit code, stdout, stderr).");
}
