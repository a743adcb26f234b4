#include "glyco/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "glyco/baselines.hpp"
#include "glyco/checkpoint.hpp"
#include "glyco/datamodel.hpp"
#include "glyco/error.hpp"
#include "glyco/evalcluster.hpp"
#include "glyco/features.hpp"
#include "glyco/hybridvae.hpp"
#include "glyco/mechsim.hpp"
#include "glyco/parallel.hpp"
#include "glyco/textio.hpp"
#include "plot.hpp"

namespace glyco {

namespace fs = std::filesystem;

namespace {

struct ValidationFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

bool is_validation(ErrorKind k) {
  switch (k) {
    case ErrorKind::NonFiniteState:
    case ErrorKind::NumericalBlowup:
    case ErrorKind::NonFinite:
    case ErrorKind::Io:
    case ErrorKind::DegenerateInput:
      return false;
    default:
      return true;
  }
}

struct Flags {
  std::string config;
  std::string out = ".";
  std::string data;
  std::string model;
  std::string method;
  std::string checkpoint;
  std::string embeddings;
  std::string run;
  long long seed = 0;
  int epochs = 0;
  int batch = 0;
  double lr = 0.0;
  double beta_hat = 0.0;
  int k = 2;
};

class Context {
 public:
  Context(const Flags& f, const CLI::App& sub, std::ostream& out, std::ostream& err)
      : flags(f), out(out), err(err) {
    if (!f.config.empty()) kv = KeyValueConfig::load(f.config);
    if (sub.count("--seed")) kv.set("seed", std::to_string(f.seed));
    seed = static_cast<std::uint64_t>(kv.get_int("seed", 0));
    sub_ = &sub;
  }

  bool given(const std::string& flag) const { return sub_->count(flag) > 0; }
  void override_key(const std::string& flag, const std::string& key, const std::string& value) {
    if (given(flag)) kv.set(key, value);
  }
  Provenance prov() const { return {kv.hash(), seed}; }

  const Flags& flags;
  std::ostream& out;
  std::ostream& err;
  KeyValueConfig kv;
  std::uint64_t seed = 0;

 private:
  const CLI::App* sub_ = nullptr;
};

Dataset load_data(const std::string& path) {
  if (path.empty()) throw ValidationFailure("--data is required");
  Dataset d = load_csv(path);
  std::ostringstream msg;
  int shown = 0, total = 0;
  for (const auto& r : d.records) {
    for (const auto& v : validate(r)) {
      if (shown++ < 10) msg << "\n  " << r.ppgr_id << ": " << v.field << "[" << v.index << "] " << v.rule;
      ++total;
    }
  }
  if (total > 0) throw ValidationFailure(path + ": " + std::to_string(total) + " violation(s)" + msg.str());
  return d;
}

fs::path out_dir(const Flags& f) {
  fs::create_directories(f.out);
  return fs::path(f.out);
}

std::string with_provenance(const Provenance& prov, const std::string& body) {
  return provenance_line(prov) + "\n" + body;
}

std::string method_from_path(const std::string& path) {
  std::string stem = fs::path(path).stem().string();
  const std::string suffix = "_embeddings";
  if (stem.size() > suffix.size() && stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
    stem.resize(stem.size() - suffix.size());
  }
  return stem;
}

template <class Fn>
EmbeddingTable embed_all(const Dataset& d, const std::vector<std::string>& columns, Fn fn) {
  std::vector<std::vector<double>> rows(d.records.size());
  parallel_for(rows.size(), [&](std::size_t i) { rows[i] = fn(d.records[i]); });
  EmbeddingTable t;
  t.columns = columns;
  for (std::size_t i = 0; i < rows.size(); ++i) t.append(d.records[i].ppgr_id, d.records[i].person_id, rows[i]);
  return t;
}

std::vector<std::string> indexed_columns(std::size_t n) {
  std::vector<std::string> c;
  for (std::size_t j = 0; j < n; ++j) c.push_back("e_" + std::to_string(j));
  return c;
}

template <std::size_t N>
std::vector<std::string> named_columns(const std::array<const char*, N>& names) {
  return std::vector<std::string>(names.begin(), names.end());
}

EvalOptions eval_options(const Context& ctx, bool dtw) {
  EvalOptions o;
  o.k = static_cast<int>(ctx.kv.get_int("eval.k", 2));
  o.n_init = static_cast<int>(ctx.kv.get_int("eval.n_init", 10));
  o.seed = ctx.seed;
  o.normalization = ctx.kv.get_string("eval.normalization", "arithmetic") == "geometric" ? Normalization::Geometric
                                                                                          : Normalization::Arithmetic;
  o.dtw = dtw;
  return o;
}

MechFitOptions mech_options(const Context& ctx) {
  MechFitOptions o;
  o.steps = static_cast<int>(ctx.kv.get_int("mech.steps", 2000));
  o.lr = ctx.kv.get_real("mech.lr", 0.01);
  o.seed = ctx.seed;
  o.sim.substeps = static_cast<int>(ctx.kv.get_int("sim.substeps", o.sim.substeps));
  o.sim.V_G = ctx.kv.get_real("sim.V_G", o.sim.V_G);
  if (o.steps < 0 || !(o.lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "mech.steps >= 0 and mech.lr > 0 required");
  return o;
}

std::string curve_csv(const Provenance& prov, const std::vector<EpochStats>& curve) {
  std::ostringstream o;
  o << provenance_line(prov) << "\nepoch,elbo,recon,kl\n";
  for (const auto& s : curve) {
    o << s.epoch << ',' << format_real(s.elbo) << ',' << format_real(s.recon) << ',' << format_real(s.kl) << '\n';
  }
  return o.str();
}

// --- subcommands ----------------------------------------------------------------

int do_simulate(Context& ctx) {
  CohortSpec spec = CohortSpec::from_config(ctx.kv);
  spec.validate();
  const Cohort cohort = generate_cohort(spec, spec.seed);
  const fs::path dir = out_dir(ctx.flags);
  const Provenance prov = ctx.prov();
  save_csv(dir / "cohort.csv", cohort.data, prov);
  std::ostringstream truth;
  write_ground_truth_csv(truth, cohort.truth, prov);
  write_file(dir / "truth.csv", truth.str());
  KeyValueConfig resolved = ctx.kv;
  spec.write(resolved);
  write_file(dir / "run.cfg", with_provenance(prov, resolved.to_text()));
  ctx.out << "wrote " << cohort.data.records.size() << " records for " << cohort.data.person_ids().size()
          << " persons to " << dir.string() << "\n";
  return 0;
}

int do_train(Context& ctx) {
  const std::string model = ctx.flags.model;
  if (model != "hybrid" && model != "blackbox" && model != "tcl") {
    throw ValidationFailure("--model must be hybrid, blackbox or tcl");
  }
  ctx.override_key("--epochs", model + ".epochs", std::to_string(ctx.flags.epochs));
  ctx.override_key("--batch", model + ".batch", std::to_string(ctx.flags.batch));
  ctx.override_key("--lr", model + ".lr", format_real(ctx.flags.lr));
  ctx.override_key("--beta-hat", model + ".beta_hat", format_real(ctx.flags.beta_hat));
  const Dataset data = load_data(ctx.flags.data);
  const fs::path dir = out_dir(ctx.flags);
  const Provenance prov = ctx.prov();
  const auto norm = InputNormalizer::fit(data);
  const std::uint64_t init_seed = derive_seed(ctx.seed, 1), train_seed = derive_seed(ctx.seed, 2);

  if (model == "tcl") {
    TclModel m(TclConfig::read(ctx.kv), norm, init_seed);
    const auto res = train_tcl(data, m, train_seed);
    save_checkpoint(dir / "tcl.json", tcl_checkpoint(m, res.adam, init_seed));
    std::ostringstream o;
    o << provenance_line(prov) << "\nepoch,loss\n";
    for (std::size_t i = 0; i < res.loss.size(); ++i) o << i + 1 << ',' << format_real(res.loss[i]) << '\n';
    write_file(dir / "tcl_curve.csv", o.str());
    ctx.out << "tcl: " << m.parameters().count() << " parameters, window accuracy " << m.window_accuracy(data) << "\n";
    return 0;
  }

  TrainOptions opts;
  opts.epochs = static_cast<int>(ctx.kv.get_int(model + ".epochs", model == "hybrid" ? 100 : 1000));
  opts.batch = static_cast<int>(ctx.kv.get_int(model + ".batch", 64));
  opts.lr = ctx.kv.get_real(model + ".lr", 0.01);
  opts.beta_hat = ctx.kv.get_real(model + ".beta_hat", 0.01);
  opts.seed = train_seed;
  if (!(opts.lr > 0.0) || opts.beta_hat < 0.0) throw Error(ErrorKind::InvalidConfig, "lr > 0 and beta_hat >= 0 required");

  TrainResult res;
  std::size_t count = 0;
  if (model == "hybrid") {
    HybridModel m(HybridConfig::read(ctx.kv), norm, init_seed);
    res = train(data, m, opts);
    save_checkpoint(dir / "hybrid.json", hybrid_checkpoint(m, res.adam, init_seed));
    count = m.parameters().count();
  } else {
    BlackBoxModel m(BlackBoxConfig::read(ctx.kv), norm, init_seed);
    res = train_blackbox(data, m, opts);
    save_checkpoint(dir / "blackbox.json", blackbox_checkpoint(m, res.adam, init_seed));
    count = m.parameters().count();
  }
  write_file(dir / (model + "_curve.csv"), curve_csv(prov, res.curve));
  ctx.out << model << ": " << count << " parameters";
  if (!res.curve.empty()) ctx.out << ", final mean ELBO " << res.curve.back().elbo;
  ctx.out << "\n";
  return 0;
}

int do_fit_mech(Context& ctx) {
  const Dataset data = load_data(ctx.flags.data);
  const auto opts = mech_options(ctx);
  std::vector<MechFitResult> fits(data.records.size());
  parallel_for(fits.size(), [&](std::size_t i) { fits[i] = fit_mechanistic(data.records[i], opts); });
  const fs::path dir = out_dir(ctx.flags);
  const Provenance prov = ctx.prov();
  EmbeddingTable t;
  t.columns = named_columns(MechEmbedding::kNames);
  std::ostringstream o;
  o << provenance_line(prov) << "\nppgr_id,person_id,rmse,initial_rmse,tau_m,G_b,S_G,p_2,S_I,M_I,G0,X0,G1,G2\n";
  for (std::size_t i = 0; i < fits.size(); ++i) {
    const auto& r = data.records[i];
    const auto& f = fits[i];
    t.append(r.ppgr_id, r.person_id, f.embedding);
    o << r.ppgr_id << ',' << r.person_id << ',' << format_real(std::sqrt(f.mse)) << ','
      << format_real(std::sqrt(f.initial_mse));
    for (double v : f.params.to_array()) o << ',' << format_real(v);
    for (double v : f.x0.to_array()) o << ',' << format_real(v);
    o << '\n';
  }
  save_embedding_csv(dir / "mech_embeddings.csv", t, prov);
  write_file(dir / "mech_fits.csv", o.str());
  ctx.out << "fitted " << fits.size() << " records\n";
  return 0;
}

int do_features(Context& ctx) {
  const Dataset data = load_data(ctx.flags.data);
  const auto t = embed_all(data, named_columns(ExpertFeatures::kNames), [](const PpgrRecord& r) {
    const auto a = expert_features(r).to_array();
    return std::vector<double>(a.begin(), a.end());
  });
  save_embedding_csv(out_dir(ctx.flags) / "features_embeddings.csv", t, ctx.prov());
  ctx.out << "features for " << t.size() << " records\n";
  return 0;
}

std::string reconstruction_rows(const PpgrRecord& r, const std::array<double, kSeqLen>& pred, const CarbRate& u) {
  std::ostringstream o;
  for (int t = 0; t < kSeqLen; ++t) {
    o << r.ppgr_id << ',' << r.person_id << ',' << t << ',' << (r.glucose[t] ? format_real(*r.glucose[t]) : "") << ','
      << format_real(pred[t]) << ',' << format_real(u[t]) << '\n';
  }
  return o.str();
}

int do_embed(Context& ctx) {
  const Dataset data = load_data(ctx.flags.data);
  const fs::path dir = out_dir(ctx.flags);
  const Provenance prov = ctx.prov();
  if (ctx.flags.checkpoint.empty()) {
    if (ctx.flags.method != "raw") throw ValidationFailure("--checkpoint is required unless --method raw");
    const auto t = embed_all(data, indexed_columns(kSeqLen), [](const PpgrRecord& r) { return raw_embedding(r); });
    save_embedding_csv(dir / "raw_embeddings.csv", t, prov);
    ctx.out << "raw embeddings for " << t.size() << " records\n";
    return 0;
  }
  const Checkpoint ckpt = load_checkpoint(ctx.flags.checkpoint);
  std::string name = ckpt.kind;
  EmbeddingTable t;
  if (ckpt.kind == "hybrid") {
    const HybridModel m = hybrid_from_checkpoint(ckpt);
    t = embed_all(data, named_columns(MechEmbedding::kNames), [&](const PpgrRecord& r) {
      const auto e = m.embed(r).values;
      return std::vector<double>(e.begin(), e.end());
    });
    std::vector<std::string> rows(data.records.size());
    parallel_for(rows.size(), [&](std::size_t i) {
      const auto rec = m.reconstruct(data.records[i]);
      rows[i] = reconstruction_rows(data.records[i], rec.glucose, rec.u);
    });
    std::string body = provenance_line(prov) + "\nppgr_id,person_id,t,observed,predicted,u\n";
    for (const auto& s : rows) body += s;
    write_file(dir / "hybrid_reconstructions.csv", body);
  } else if (ckpt.kind == "blackbox") {
    const BlackBoxModel m = blackbox_from_checkpoint(ckpt);
    t = embed_all(data, indexed_columns(static_cast<std::size_t>(m.config().latent)),
                  [&](const PpgrRecord& r) { return m.embed(r); });
  } else if (ckpt.kind == "tcl") {
    const TclModel m = tcl_from_checkpoint(ckpt);
    const std::string mode = ctx.flags.method.empty() ? "average" : ctx.flags.method;
    if (mode != "average" && mode != "concat") throw ValidationFailure("TCL --method must be average or concat");
    const TclMode tm = mode == "average" ? TclMode::Average : TclMode::Concat;
    const std::size_t width = static_cast<std::size_t>(m.config().hidden) * (tm == TclMode::Average ? 1 : m.config().windows);
    t = embed_all(data, indexed_columns(width), [&](const PpgrRecord& r) { return m.embed(r, tm); });
    name = "tcl-" + mode;
  } else {
    throw ValidationFailure("unknown checkpoint kind " + ckpt.kind);
  }
  save_embedding_csv(dir / (name + "_embeddings.csv"), t, prov);
  ctx.out << name << " embeddings for " << t.size() << " records\n";
  return 0;
}

int do_cluster(Context& ctx) {
  if (ctx.flags.embeddings.empty()) throw ValidationFailure("--embeddings is required");
  ctx.override_key("--k", "eval.k", std::to_string(ctx.flags.k));
  const EmbeddingTable t = load_embedding_csv(ctx.flags.embeddings);
  const std::string method = ctx.flags.method.empty() ? method_from_path(ctx.flags.embeddings) : ctx.flags.method;
  const auto opts = eval_options(ctx, method == "dtw");
  const auto persons = aggregate_by_person(t);
  std::vector<int> labels;
  double inertia = 0.0;
  if (opts.dtw) {
    std::vector<std::vector<double>> series;
    for (const auto& p : persons) series.push_back(p.vector);
    auto r = dtw_kmeans(series, opts.k, opts.n_init, opts.seed);
    labels = r.labels;
    inertia = r.inertia;
  } else {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(persons.size()), static_cast<Eigen::Index>(t.columns.size()));
    for (std::size_t i = 0; i < persons.size(); ++i)
      for (std::size_t j = 0; j < t.columns.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = persons[i].vector[j];
    auto r = kmeans(x, opts.k, opts.n_init, opts.seed);
    labels = r.labels;
    inertia = r.inertia;
  }
  std::ostringstream o;
  o << provenance_line(ctx.prov()) << "\nperson_id,cluster,n_records\n";
  for (std::size_t i = 0; i < persons.size(); ++i) {
    o << persons[i].person_id << ',' << labels[i] << ',' << persons[i].n_records << '\n';
  }
  write_file(out_dir(ctx.flags) / (method + "_clusters.csv"), o.str());
  ctx.out << method << ": " << persons.size() << " persons, inertia " << inertia << "\n";
  return 0;
}

void print_scores(std::ostream& out, const ClusterReport& r) {
  out << r.method << " (d=" << r.dim << "): NMI " << r.scores.nmi << "  AMI " << r.scores.ami << "  Hom. "
      << r.scores.homogeneity << "  Comp. " << r.scores.completeness << "\n";
}

int do_evaluate(Context& ctx) {
  if (ctx.flags.embeddings.empty()) throw ValidationFailure("--embeddings is required");
  ctx.override_key("--k", "eval.k", std::to_string(ctx.flags.k));
  const EmbeddingTable t = load_embedding_csv(ctx.flags.embeddings);
  const auto labels = person_labels(load_data(ctx.flags.data));
  const std::string method = ctx.flags.method.empty() ? method_from_path(ctx.flags.embeddings) : ctx.flags.method;
  const auto report = evaluate_method(method, t, labels, eval_options(ctx, method == "dtw"));
  write_file(out_dir(ctx.flags) / (method + "_report.json"), report_to_json(report, ctx.prov()));
  print_scores(ctx.out, report);
  return 0;
}

// Person-mean scatter data for every pair of embedding dims, plus the PCA plane.
void write_scatter(const fs::path& dir, const std::string& method, const EmbeddingTable& t,
                   const std::map<std::string, std::string>& labels, const Provenance& prov, bool pairs) {
  const auto persons = aggregate_by_person(t);
  auto label_of = [&](const std::string& p) {
    const auto it = labels.find(p);
    return it == labels.end() ? std::string() : it->second;
  };
  if (pairs) {
    for (std::size_t a = 0; a < t.columns.size(); ++a) {
      for (std::size_t b = a + 1; b < t.columns.size(); ++b) {
        std::ostringstream o;
        o << provenance_line(prov) << "\nperson_id,label," << t.columns[a] << ',' << t.columns[b] << '\n';
        for (const auto& p : persons) {
          o << p.person_id << ',' << label_of(p.person_id) << ',' << format_real(p.vector[a]) << ','
            << format_real(p.vector[b]) << '\n';
        }
        write_file(dir / (method + "_" + t.columns[a] + "_vs_" + t.columns[b] + ".csv"), o.str());
      }
    }
  }
  if (persons.size() < 2) return;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(persons.size()), static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < persons.size(); ++i)
    for (std::size_t j = 0; j < t.columns.size(); ++j) x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = persons[i].vector[j];
  const int dims = std::min<int>(2, static_cast<int>(x.cols()));
  const auto pca = pca_project(standardize(x), dims);
  std::ostringstream o;
  o << provenance_line(prov) << "\nperson_id,label,pc1,pc2\n";
  for (std::size_t i = 0; i < persons.size(); ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    o << persons[i].person_id << ',' << label_of(persons[i].person_id) << ',' << format_real(pca.projected(row, 0)) << ','
      << format_real(dims > 1 ? pca.projected(row, 1) : 0.0) << '\n';
  }
  write_file(dir / (method + "_pca.csv"), o.str());
}

int do_report(Context& ctx) {
  if (ctx.flags.run.empty()) throw ValidationFailure("--run is required");
  const Dataset data = load_data(ctx.flags.data);
  const auto labels = person_labels(data);
  const fs::path run(ctx.flags.run);
  const fs::path dir = out_dir(ctx.flags);
  const Provenance prov = ctx.prov();

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(run)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > 15 && name.ends_with("_embeddings.csv")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ValidationFailure("no *_embeddings.csv files in " + run.string());

  fs::create_directories(dir / "reports");
  fs::create_directories(dir / "scatter");
  std::vector<ClusterReport> reports;
  for (const auto& f : files) {
    const std::string method = method_from_path(f.string());
    const EmbeddingTable t = load_embedding_csv(f);
    std::vector<std::pair<std::string, bool>> variants{{method, false}};
    if (method == "raw") variants.emplace_back("dtw", true);
    for (const auto& [name, dtw] : variants) {
      auto rep = evaluate_method(name, t, labels, eval_options(ctx, dtw));
      write_file(dir / "reports" / (name + ".json"), report_to_json(rep, prov));
      print_scores(ctx.out, rep);
      reports.push_back(std::move(rep));
    }
    const bool mech = std::find(t.columns.begin(), t.columns.end(), "G_b") != t.columns.end();
    write_scatter(dir / "scatter", method, t, labels, prov, mech);
  }
  write_file(dir / "scores.csv", summary_csv(reports, prov));

  const fs::path hybrid_ckpt = run / "hybrid.json";
  if (fs::exists(hybrid_ckpt)) {
    const HybridModel m = hybrid_from_checkpoint(load_checkpoint(hybrid_ckpt));
    const auto opts = mech_options(ctx);
    const int n = std::min<int>(static_cast<int>(ctx.kv.get_int("report.records", 4)), static_cast<int>(data.records.size()));
    fs::create_directories(dir / "recon");
    std::vector<std::string> rows(static_cast<std::size_t>(n)), svgs(static_cast<std::size_t>(n));
    parallel_for(rows.size(), [&](std::size_t i) {
      const PpgrRecord& r = data.records[i];
      const auto hyb = m.reconstruct(r);
      const auto grams = logged_carbs(r);
      const CarbRate logged = carbs_to_rate(std::span<const double, kSeqLen>(grams));
      const auto fit = fit_mechanistic(r, logged, opts);
      const auto mech = glucose_of(simulate(fit.x0, fit.params, logged, opts.sim));
      std::ostringstream o;
      Series obs{"observed", {}, {}, "black", true}, sh{"hybrid VAE", {}, {}, "#1f77b4"}, sm{"mechanistic fit", {}, {}, "#d62728"};
      for (int t = 0; t < kSeqLen; ++t) {
        const double minutes = t * kSampleMinutes;
        o << r.ppgr_id << ',' << t << ',' << format_real(minutes) << ','
          << (r.glucose[t] ? format_real(*r.glucose[t]) : "") << ',' << format_real(hyb.glucose[t]) << ','
          << format_real(mech[t]) << ',' << format_real(hyb.u[t]) << ',' << format_real(logged[t]) << '\n';
        obs.x.push_back(minutes);
        obs.y.push_back(r.glucose[t] ? *r.glucose[t] : std::nan(""));
        sh.x.push_back(minutes);
        sh.y.push_back(hyb.glucose[t]);
        sm.x.push_back(minutes);
        sm.y.push_back(mech[t]);
      }
      rows[i] = o.str();
      svgs[i] = svg_line_plot(r.ppgr_id + " (" + r.person_id + ")", "minutes", "glucose (mg/dL)", {obs, sh, sm});
    });
    std::string body = provenance_line(prov) + "\nppgr_id,t,minutes,observed,hybrid,mechanistic,u_hybrid,u_logged\n";
    for (const auto& s : rows) body += s;
    write_file(dir / "recon" / "reconstructions.csv", body);
    for (int i = 0; i < n; ++i) {
      const std::string svg = svgs[static_cast<std::size_t>(i)];
      const std::string comment = "<!-- glyco config_hash=" + prov.config_hash + " seed=" + std::to_string(prov.seed) + " -->\n";
      write_file(dir / "recon" / (data.records[static_cast<std::size_t>(i)].ppgr_id + ".svg"), comment + svg);
    }
  } else {
    ctx.err << "note: no hybrid.json in " << run.string() << ", skipping reconstructions\n";
  }
  ctx.out << "report written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"glyco: hybrid mechanistic VAE experiments on glucose responses"};
  app.require_subcommand(1);
  Flags f;

  auto common = [&](CLI::App* s) {
    s->add_option("--config", f.config, "flat key = value config file")->check(CLI::ExistingFile);
    s->add_option("--seed", f.seed, "random seed (overrides config `seed`)");
    s->add_option("--out", f.out, "output directory");
  };
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic two-group cohort");
  common(simulate);
  simulate->add_option("--spec", f.config, "alias of --config")->check(CLI::ExistingFile);

  auto* trainc = app.add_subcommand("train", "train hybrid, blackbox or tcl");
  common(trainc);
  trainc->add_option("--model", f.model, "hybrid | blackbox | tcl")->required();
  trainc->add_option("--data", f.data, "cohort CSV")->required()->check(CLI::ExistingFile);
  trainc->add_option("--epochs", f.epochs);
  trainc->add_option("--batch", f.batch);
  trainc->add_option("--lr", f.lr);
  trainc->add_option("--beta-hat", f.beta_hat);

  auto* fit = app.add_subcommand("fit-mech", "per-record mechanistic fit with logged carbs");
  common(fit);
  fit->add_option("--data", f.data)->required()->check(CLI::ExistingFile);

  auto* feats = app.add_subcommand("features", "expert glycemic features");
  common(feats);
  feats->add_option("--data", f.data)->required()->check(CLI::ExistingFile);

  auto* embed = app.add_subcommand("embed", "embed records with a checkpoint or the raw trace");
  common(embed);
  embed->add_option("--data", f.data)->required()->check(CLI::ExistingFile);
  embed->add_option("--checkpoint", f.checkpoint)->check(CLI::ExistingFile);
  embed->add_option("--model", f.checkpoint, "alias of --checkpoint")->check(CLI::ExistingFile);
  embed->add_option("--method", f.method, "raw, or average | concat for TCL");

  auto* cluster = app.add_subcommand("cluster", "k-means over person-mean embeddings");
  common(cluster);
  cluster->add_option("--embeddings", f.embeddings)->required()->check(CLI::ExistingFile);
  cluster->add_option("--method", f.method, "name; dtw selects DTW k-means");
  cluster->add_option("--k", f.k);

  auto* evaluate = app.add_subcommand("evaluate", "cluster and score against diagnosis labels");
  common(evaluate);
  evaluate->add_option("--embeddings", f.embeddings)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--data", f.data, "cohort CSV with diagnosis labels")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--method", f.method, "name; dtw selects DTW k-means");
  evaluate->add_option("--k", f.k);

  auto* report = app.add_subcommand("report", "score table, scatter data and reconstruction plots");
  common(report);
  report->add_option("--run", f.run, "directory holding *_embeddings.csv and checkpoints")->required()->check(CLI::ExistingDirectory);
  report->add_option("--data", f.data)->required()->check(CLI::ExistingFile);

  std::vector<const char*> argv;
  argv.push_back("glyco");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  try {
    Context ctx(f, *sub, out, err);
    const std::string name = sub->get_name();
    if (name == "simulate") return do_simulate(ctx);
    if (name == "train") return do_train(ctx);
    if (name == "fit-mech") return do_fit_mech(ctx);
    if (name == "features") return do_features(ctx);
    if (name == "embed") return do_embed(ctx);
    if (name == "cluster") return do_cluster(ctx);
    if (name == "evaluate") return do_evaluate(ctx);
    if (name == "report") return do_report(ctx);
    return 2;
  } catch (const ValidationFailure& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return is_validation(e.kind()) ? 2 : 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int cli(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli(args, std::cout, std::cerr);
}

}  // namespace glyco
