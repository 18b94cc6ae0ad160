// Command-line entry points: cohort simulation, model fitting, marginal
// associations, Gram export, and the replicated simulation-table protocol.

#include <CLI11.hpp>
#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "icdgp/io.hpp"
#include "icdgp/replicate.hpp"

namespace fs = std::filesystem;
using namespace icdgp;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

/// Fills `slot` from the loaded config unless the flag was given explicitly.
template <typename T>
void resolve(const CLI::App& app, const std::string& flag, const Json& config,
             const std::string& key, T& slot) {
  if (app.count(flag) > 0) return;
  if (config.contains(key)) slot = config.at(key).get<T>();
}

Json load_config_if_any(const std::string& path) {
  if (path.empty()) return Json::object();
  return Json::parse(read_text_file(path));
}

void write_config(const fs::path& out_dir, Json config) {
  config["config_hash"] = config_hash(config);
  write_text_file((out_dir / "resolved_config.json").string(), config.dump(2) + "\n");
}

void ensure_out_dir(const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw InputError("cannot create output directory: " + out_dir.string());
}

std::uint64_t parse_seed(const std::string& text) {
  return static_cast<std::uint64_t>(std::stoull(text));
}

// --- simulate ---------------------------------------------------------------

struct SimulateArgs {
  int design = 1;
  std::string model = "clf";
  int n = 1000;
  int m = 100;
  int reps = 10;
  std::string seed = "2023";
  double tau0_sq = 0.01;
  int corpus_size = 1500;
  std::string out;
  std::string config_path;
};

int cmd_simulate(const CLI::App& app, SimulateArgs args) {
  const Json loaded = load_config_if_any(args.config_path);
  resolve(app, "--design", loaded, "design", args.design);
  resolve(app, "--model", loaded, "model", args.model);
  resolve(app, "--n", loaded, "n", args.n);
  resolve(app, "--m", loaded, "m", args.m);
  resolve(app, "--reps", loaded, "reps", args.reps);
  resolve(app, "--seed", loaded, "seed", args.seed);
  resolve(app, "--tau0-sq", loaded, "tau0_sq", args.tau0_sq);
  resolve(app, "--corpus-size", loaded, "corpus_size", args.corpus_size);
  resolve(app, "--out", loaded, "out", args.out);

  if (args.design < 1 || args.design > 3) throw InputError("design must be 1, 2, or 3");
  if (args.model != "clf" && args.model != "reg")
    throw InputError("model must be clf or reg");
  if (args.reps < 1) throw InputError("reps must be at least 1");
  if (args.n < 1 || args.m < 0) throw InputError("need n >= 1 and m >= 0");
  if (args.out.empty()) throw InputError("--out is required");

  const std::uint64_t seed = parse_seed(args.seed);
  const fs::path out_dir(args.out);
  ensure_out_dir(out_dir);

  std::optional<SurrogateCorpus> corpus;
  ConditionCatalog catalog = synthetic_catalog();
  if (args.design == 3) {
    corpus = gen_surrogate_corpus(args.corpus_size, derive_seed(seed, 777));
    catalog = corpus->catalog;
  }
  {
    std::ofstream out(out_dir / "catalog.csv");
    catalog.write_csv(out);
  }

  const bool classification = args.model == "clf";
  for (int rep = 0; rep < args.reps; ++rep) {
    const std::uint64_t rep_seed = derive_seed(seed, static_cast<std::uint64_t>(rep));
    SyntheticCohort cohort;
    if (classification) {
      cohort = args.design == 1   ? gen_sim1_class(args.n, args.m, rep_seed)
               : args.design == 2 ? gen_sim2_class(args.n, args.m, rep_seed)
                                  : gen_sim3_class(args.n, args.m, rep_seed, *corpus);
    } else {
      cohort = gen_sim_reg(args.design, args.n, args.m, args.tau0_sq, rep_seed,
                           corpus ? &*corpus : nullptr);
    }
    std::ofstream out(out_dir / ("rep_" + std::to_string(rep + 1) + ".csv"));
    write_cohort_csv(out, cohort);
    write_text_file((out_dir / ("rep_" + std::to_string(rep + 1) + ".json")).string(),
                    cohort_sidecar(cohort, rep + 1).dump(2) + "\n");
  }

  Json config;
  config["command"] = "simulate";
  config["design"] = args.design;
  config["model"] = args.model;
  config["n"] = args.n;
  config["m"] = args.m;
  config["reps"] = args.reps;
  config["seed"] = args.seed;
  config["tau0_sq"] = args.tau0_sq;
  config["corpus_size"] = args.corpus_size;
  config["out"] = args.out;
  write_config(out_dir, config);
  std::cerr << "wrote " << args.reps << " cohorts to " << args.out << "\n";
  return 0;
}

// --- fit --------------------------------------------------------------------

struct FitArgs {
  std::string model;
  std::string cohort;
  std::string catalog;
  std::string test_cohort;
  int train = -1;  // -1 = all rows train
  std::string out;
  std::string kernel = "se";
  std::string weights = "uniform";
  int lmax = kDefaultMaxCodeLength;
  int iterations = 10000;
  int burn_in = 5000;
  int thin = 5;
  std::string seed = "1";
  double a_phi = 0.0;
  double b_phi = 5.0;
  double b1 = 1.0;
  double b2 = 2.0;
  bool no_pseudo = false;
  std::string pseudo_x;
  std::string config_path;
};

struct LoadedCohort {
  Eigen::VectorXd y;
  Eigen::MatrixXd X;
  std::vector<Diagnosis> diagnoses;
  std::vector<std::string> ids;
  std::vector<IcdCode> unmatched;
};

LoadedCohort to_model_rows(const CohortFile& file, const ConditionCatalog& catalog,
                           std::size_t begin, std::size_t end) {
  LoadedCohort loaded;
  const auto n = static_cast<Eigen::Index>(end - begin);
  const auto p = static_cast<Eigen::Index>(file.covariate_names.size()) + 1;
  loaded.y.resize(n);
  loaded.X.resize(n, p);
  for (std::size_t r = begin; r < end; ++r) {
    const auto& row = file.rows[r];
    const auto i = static_cast<Eigen::Index>(r - begin);
    loaded.y[i] = row.y;
    loaded.X(i, 0) = 1.0;
    for (std::size_t j = 0; j < row.covariates.size(); ++j)
      loaded.X(i, static_cast<Eigen::Index>(j) + 1) = row.covariates[j];
    auto assigned = assign_to_conditions(row.codes, catalog);
    loaded.diagnoses.push_back(std::move(assigned.diagnosis));
    loaded.unmatched.insert(loaded.unmatched.end(), assigned.unmatched.begin(),
                            assigned.unmatched.end());
    loaded.ids.push_back(row.patient_id);
  }
  return loaded;
}

Json unmatched_report(const std::vector<IcdCode>& unmatched) {
  std::vector<std::string> unique;
  for (const auto& code : unmatched) unique.push_back(code.text());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  Json report;
  report["count"] = unmatched.size();
  report["codes"] = unique;
  return report;
}

int cmd_fit(const CLI::App& app, FitArgs args) {
  const Json loaded_config = load_config_if_any(args.config_path);
  resolve(app, "--model", loaded_config, "model", args.model);
  resolve(app, "--cohort", loaded_config, "cohort", args.cohort);
  resolve(app, "--catalog", loaded_config, "catalog", args.catalog);
  resolve(app, "--test", loaded_config, "test", args.test_cohort);
  resolve(app, "--train", loaded_config, "train", args.train);
  resolve(app, "--out", loaded_config, "out", args.out);
  resolve(app, "--kernel", loaded_config, "kernel", args.kernel);
  resolve(app, "--weights", loaded_config, "weights", args.weights);
  resolve(app, "--lmax", loaded_config, "lmax", args.lmax);
  resolve(app, "--iterations", loaded_config, "iterations", args.iterations);
  resolve(app, "--burn-in", loaded_config, "burn_in", args.burn_in);
  resolve(app, "--thin", loaded_config, "thin", args.thin);
  resolve(app, "--seed", loaded_config, "seed", args.seed);
  resolve(app, "--a-phi", loaded_config, "a_phi", args.a_phi);
  resolve(app, "--b-phi", loaded_config, "b_phi", args.b_phi);
  resolve(app, "--b1", loaded_config, "b1", args.b1);
  resolve(app, "--b2", loaded_config, "b2", args.b2);
  resolve(app, "--no-pseudo", loaded_config, "no_pseudo", args.no_pseudo);
  resolve(app, "--pseudo-x", loaded_config, "pseudo_x", args.pseudo_x);

  if (args.model != "reg" && args.model != "clf")
    throw InputError("model must be reg or clf");
  if (args.kernel != "se" && args.kernel != "exp")
    throw InputError("kernel must be se or exp");
  if (args.weights != "uniform" && args.weights != "self")
    throw InputError("weights must be uniform or self");
  if (args.cohort.empty() || args.catalog.empty() || args.out.empty())
    throw InputError("--cohort, --catalog, and --out are required");

  auto catalog = ConditionCatalog::read_csv_file(args.catalog, args.lmax);
  if (args.weights == "self")
    catalog.set_weights(default_weights(catalog, LambdaSpec::identity()));

  const auto cohort_file = read_cohort_csv_file(args.cohort, args.lmax);
  if (cohort_file.rows.empty()) throw InputError("cohort file has no rows");

  std::size_t n_train = cohort_file.rows.size();
  if (args.train >= 0) {
    if (args.train < 1 || static_cast<std::size_t>(args.train) > cohort_file.rows.size())
      throw InputError("--train must select at least one and at most all rows");
    n_train = static_cast<std::size_t>(args.train);
  }
  const auto train = to_model_rows(cohort_file, catalog, 0, n_train);
  LoadedCohort test;
  if (!args.test_cohort.empty()) {
    const auto test_file = read_cohort_csv_file(args.test_cohort, args.lmax);
    if (test_file.covariate_names != cohort_file.covariate_names)
      throw InputError("test cohort covariates differ from the training cohort");
    test = to_model_rows(test_file, catalog, 0, test_file.rows.size());
  } else {
    test = to_model_rows(cohort_file, catalog, n_train, cohort_file.rows.size());
  }

  RegressionConfig config;
  config.a_phi = args.a_phi;
  config.b_phi = args.b_phi;
  config.b1 = args.b1;
  config.b2 = args.b2;
  config.gamma = args.kernel == "se" ? 2.0 : 1.0;
  config.iterations = args.iterations;
  config.burn_in = args.burn_in;
  config.thin = args.thin;
  config.seed = parse_seed(args.seed);
  config.validate();

  const fs::path out_dir(args.out);
  ensure_out_dir(out_dir);

  Json config_json;
  config_json["command"] = "fit";
  config_json["model"] = args.model;
  config_json["cohort"] = args.cohort;
  config_json["catalog"] = args.catalog;
  config_json["test"] = args.test_cohort;
  config_json["train"] = args.train;
  config_json["out"] = args.out;
  config_json["kernel"] = args.kernel;
  config_json["weights"] = args.weights;
  config_json["lmax"] = args.lmax;
  config_json["iterations"] = args.iterations;
  config_json["burn_in"] = args.burn_in;
  config_json["thin"] = args.thin;
  config_json["seed"] = args.seed;
  config_json["a_phi"] = args.a_phi;
  config_json["b_phi"] = args.b_phi;
  config_json["b1"] = args.b1;
  config_json["b2"] = args.b2;
  config_json["no_pseudo"] = args.no_pseudo;
  config_json["pseudo_x"] = args.pseudo_x;
  const std::string hash = config_hash(config_json);

  const auto& unmatched = train.unmatched;
  if (!unmatched.empty())
    std::cerr << "warning: " << unmatched.size()
              << " diagnosis codes matched no catalog condition\n";

  Json summary_json;
  Json metrics_json;

  if (args.model == "reg") {
    RegressionData data;
    data.y = train.y;
    data.X = train.X;
    data.diagnoses = train.diagnoses;
    data.test_X = test.X.rows() > 0 ? test.X : Eigen::MatrixXd(0, train.X.cols());
    data.test_diagnoses = test.diagnoses;
    const auto draws = run_regression_mcmc(data, catalog, config);
    {
      std::ofstream out(out_dir / "draws.csv");
      write_regression_draws_csv(out, draws);
    }
    const auto summary = summarize_regression(draws);
    summary_json = summary_to_json(summary);
    if (test.y.size() > 0) {
      std::vector<double> y_pred(static_cast<std::size_t>(test.y.size()));
      for (Eigen::Index j = 0; j < test.y.size(); ++j)
        y_pred[static_cast<std::size_t>(j)] = draws.ystar.col(j).mean();
      const auto intervals = prediction_intervals(draws.ystar, 0.95);
      double mspe = 0.0, coverage = 0.0;
      for (Eigen::Index j = 0; j < test.y.size(); ++j) {
        const double diff = y_pred[static_cast<std::size_t>(j)] - test.y[j];
        mspe += diff * diff;
        coverage += test.y[j] >= intervals[static_cast<std::size_t>(j)].lower &&
                    test.y[j] <= intervals[static_cast<std::size_t>(j)].upper;
      }
      metrics_json["mspe"] = mspe / static_cast<double>(test.y.size());
      metrics_json["coverage"] = coverage / static_cast<double>(test.y.size());
    }
  } else {
    ClassificationData data;
    data.y = train.y.cast<int>();
    data.X = train.X;
    data.diagnoses = train.diagnoses;
    const auto m_user = static_cast<Eigen::Index>(test.diagnoses.size());
    data.test_X = test.X.rows() > 0 ? test.X : Eigen::MatrixXd(0, train.X.cols());
    data.test_diagnoses = test.diagnoses;

    // pseudo patients ride along as extra test points
    Eigen::Index m_pseudo = 0;
    if (!args.no_pseudo) {
      Eigen::RowVectorXd x_star = Eigen::RowVectorXd::Zero(train.X.cols());
      x_star[0] = 1.0;
      if (!args.pseudo_x.empty()) {
        std::stringstream stream(args.pseudo_x);
        std::string piece;
        Eigen::Index j = 1;
        while (std::getline(stream, piece, ',')) {
          if (j >= x_star.size())
            throw InputError("--pseudo-x has more values than covariates");
          x_star[j++] = std::stod(piece);
        }
      }
      const auto pseudo = pseudo_patient_set(catalog, x_star);
      m_pseudo = static_cast<Eigen::Index>(pseudo.diagnoses.size());
      Eigen::MatrixXd test_x(m_user + m_pseudo, train.X.cols());
      if (m_user > 0) test_x.topRows(m_user) = data.test_X;
      for (Eigen::Index r = 0; r < m_pseudo; ++r) test_x.row(m_user + r) = pseudo.x_star;
      data.test_X = test_x;
      data.test_diagnoses.insert(data.test_diagnoses.end(), pseudo.diagnoses.begin(),
                                 pseudo.diagnoses.end());
    }

    auto draws = run_classification_mcmc(data, catalog, config);

    // split off the pseudo block before writing user-facing draws
    ClassificationDraws user = draws;
    user.fstar = draws.fstar.leftCols(m_user);
    user.ystar = draws.ystar.leftCols(m_user);
    user.pstar = draws.pstar.leftCols(m_user);
    {
      std::ofstream out(out_dir / "draws.csv");
      write_classification_draws_csv(out, user, m_user);
    }
    const auto summary = summarize_classification(user);
    summary_json = summary_to_json(summary);

    if (m_pseudo > 0) {
      std::ofstream out(out_dir / "pseudo_pstar.csv");
      for (std::size_t c = 0; c < catalog.size(); ++c) {
        if (c) out << ',';
        out << detail::csv_quote(catalog.condition(c).name);
      }
      out << '\n';
      const Eigen::MatrixXd pseudo_block = draws.pstar.rightCols(m_pseudo);
      for (Eigen::Index r = 0; r < pseudo_block.rows(); ++r) {
        for (Eigen::Index c = 0; c < pseudo_block.cols(); ++c) {
          if (c) out << ',';
          out << detail::format_double(pseudo_block(r, c));
        }
        out << '\n';
      }
    }

    if (m_user > 0) {
      bool has0 = false, has1 = false;
      for (Eigen::Index j = 0; j < m_user; ++j) (test.y[j] != 0.0 ? has1 : has0) = true;
      if (has0 && has1) {
        const auto outcome =
            score_classification(user, data.y, test.y.cast<int>().head(m_user));
        metrics_json["auc"] = outcome.auc;
        metrics_json["accuracy"] = outcome.accuracy;
        metrics_json["sensitivity"] = outcome.sensitivity;
        metrics_json["specificity"] = outcome.specificity;
        metrics_json["cutoff"] = outcome.cutoff;
      }
    }
  }

  summary_json["config_hash"] = hash;
  summary_json["unmatched"] = unmatched_report(unmatched);
  write_text_file((out_dir / "summary.json").string(), summary_json.dump(2) + "\n");
  if (!metrics_json.empty())
    write_text_file((out_dir / "metrics.json").string(), metrics_json.dump(2) + "\n");
  write_config(out_dir, config_json);
  return 0;
}

// --- assoc --------------------------------------------------------------------

struct AssocArgs {
  std::string fit_dir;
  std::string catalog;
  std::string out;
  double min_estimate = -1.0;
};

int cmd_assoc(const AssocArgs& args) {
  if (args.fit_dir.empty() || args.catalog.empty())
    throw InputError("--fit and --catalog are required");
  const auto catalog = ConditionCatalog::read_csv_file(args.catalog);
  const fs::path pstar_path = fs::path(args.fit_dir) / "pseudo_pstar.csv";
  std::ifstream in(pstar_path);
  if (!in)
    throw InputError("no pseudo-patient draws found at " + pstar_path.string() +
                     " (fit with pseudo patients enabled)");
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty pseudo-patient draws file");
  const auto names = detail::split_csv_line(line);
  if (names.size() != catalog.size())
    throw InputError("pseudo-patient columns do not match the catalog");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    std::vector<double> row;
    for (const auto& field : fields) row.push_back(std::stod(field));
    if (row.size() != names.size()) throw InputError("ragged pseudo-patient draws file");
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd pstar(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(names.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      pstar(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];

  auto estimates = marginal_associations(pstar, catalog);
  if (args.min_estimate >= 0.0) {
    std::erase_if(estimates, [&](const AssociationEstimate& row) {
      return !(row.estimate > args.min_estimate);
    });
  }
  const std::string out_path =
      args.out.empty() ? (fs::path(args.fit_dir) / "associations.csv").string() : args.out;
  std::ofstream out(out_path);
  if (!out) throw InputError("cannot write " + out_path);
  write_associations_csv(out, estimates);
  return 0;
}

// --- gram ---------------------------------------------------------------------

struct GramArgs {
  std::string cohort;
  std::string catalog;
  std::string out;
  std::string kernel = "normalized";
  double sigma2 = 1.0;
  double phi = 1.0;
  double gamma = 1.5;
  int order = 2;
  double nu = 2.5;
  std::string weights = "uniform";
  std::string lambda = "identity";
  double lambda_decay = 0.5;
  int lmax = kDefaultMaxCodeLength;
};

int cmd_gram(const GramArgs& args) {
  if (args.cohort.empty() || args.catalog.empty() || args.out.empty())
    throw InputError("--cohort, --catalog, and --out are required");
  auto catalog = ConditionCatalog::read_csv_file(args.catalog, args.lmax);
  if (args.lambda != "geometric" && args.lambda != "identity")
    throw InputError("lambda must be identity or geometric");
  const LambdaSpec lambda = args.lambda == "geometric"
                                ? LambdaSpec::geometric(args.lambda_decay)
                                : LambdaSpec::identity();
  if (args.weights == "self")
    catalog.set_weights(default_weights(catalog, lambda));
  else if (args.weights != "uniform")
    throw InputError("weights must be uniform or self");

  KernelSpec spec;
  spec.lambda = lambda;
  if (args.kernel == "kappa2-raw") spec.family = Kappa2Raw{};
  else if (args.kernel == "normalized") spec.family = KappaNormalized{};
  else if (args.kernel == "poly") spec.family = PolynomialKernel{args.order, args.sigma2};
  else if (args.kernel == "exp")
    spec.family = GammaExponentialKernel{1.0, args.sigma2, args.phi};
  else if (args.kernel == "se")
    spec.family = GammaExponentialKernel{2.0, args.sigma2, args.phi};
  else if (args.kernel == "gexp")
    spec.family = GammaExponentialKernel{args.gamma, args.sigma2, args.phi};
  else if (args.kernel == "matern")
    spec.family = MaternKernel{args.nu, args.sigma2, args.phi};
  else
    throw InputError("unknown kernel: " + args.kernel);
  spec.validate();

  const auto cohort = read_cohort_csv_file(args.cohort, args.lmax);
  std::vector<Diagnosis> diagnoses;
  std::vector<std::string> ids;
  for (const auto& row : cohort.rows) {
    diagnoses.push_back(assign_to_conditions(row.codes, catalog).diagnosis);
    ids.push_back(row.patient_id);
  }
  const auto gram = gram_matrix(diagnoses, spec, catalog);
  std::ofstream out(args.out);
  if (!out) throw InputError("cannot write " + args.out);
  write_gram_csv(out, gram, ids);
  return 0;
}

// --- replicate-tables -----------------------------------------------------------

struct TablesArgs {
  std::string designs = "c1,c2,c3,r1,r2,r3";
  std::string seed = "2023";
  std::string out;
  bool fast = false;
  int reps = 10;
  int n = 1000;
  int m = 100;
  int iterations = 10000;
  int threads = 0;
  int corpus_size = 1500;
  std::string config_path;
};

Json classification_json(const ProtocolResult& result, bool fast) {
  const auto paper = paper_classification_row(result.options.design);
  Json out;
  out["design"] = result.options.design;
  out["model"] = "clf";
  out["comparable_to_paper"] = paper.comparable;
  Json reps = Json::array();
  for (const auto& rep : result.classification) {
    Json entry;
    entry["auc"] = rep.auc;
    entry["accuracy"] = rep.accuracy;
    entry["sensitivity"] = rep.sensitivity;
    entry["specificity"] = rep.specificity;
    entry["cutoff"] = rep.cutoff;
    reps.push_back(entry);
  }
  out["replicates"] = reps;
  Json mean;
  mean["auc"] = result.classification_mean.auc;
  mean["accuracy"] = result.classification_mean.accuracy;
  mean["sensitivity"] = result.classification_mean.sensitivity;
  mean["specificity"] = result.classification_mean.specificity;
  out["average"] = mean;
  Json reference;
  reference["auc"] = paper.auc;
  reference["accuracy"] = paper.accuracy;
  reference["sensitivity"] = paper.sensitivity;
  reference["specificity"] = paper.specificity;
  out["published_se_gp"] = reference;
  out["gate_passed"] = design_gate_passes(result.options.design,
                                          ResponseKind::Classification,
                                          result.classification_mean, {}, fast);
  return out;
}

Json regression_json(const ProtocolResult& result, bool fast) {
  const auto paper = paper_regression_row(result.options.design);
  Json out;
  out["design"] = result.options.design;
  out["model"] = "reg";
  out["comparable_to_paper"] = paper.comparable;
  Json reps = Json::array();
  for (const auto& rep : result.regression) {
    Json entry;
    entry["mse_beta"] = rep.mse_beta;
    entry["mse_tau2"] = rep.mse_tau2;
    entry["mspe"] = rep.mspe;
    entry["coverage"] = rep.coverage;
    reps.push_back(entry);
  }
  out["replicates"] = reps;
  Json mean;
  mean["mse_beta"] = result.regression_mean.mse_beta;
  mean["mse_tau2"] = result.regression_mean.mse_tau2;
  mean["mspe"] = result.regression_mean.mspe;
  mean["coverage"] = result.regression_mean.coverage;
  out["average"] = mean;
  Json reference;
  reference["mse_beta"] = paper.mse_beta;
  reference["mse_tau2"] = paper.mse_tau2;
  reference["mspe"] = paper.mspe;
  reference["coverage"] = paper.coverage;
  out["published_se_gp"] = reference;
  out["gate_passed"] = design_gate_passes(result.options.design, ResponseKind::Regression,
                                          {}, result.regression_mean, fast);
  return out;
}

/// Block-structure check of the surrogate corpus: mean normalized kernel
/// within clusters against across clusters.
Json surrogate_block_structure(int corpus_size, std::uint64_t seed) {
  const auto corpus = gen_surrogate_corpus(corpus_size, derive_seed(seed, 777));
  std::vector<Diagnosis> diagnoses;
  for (const auto& patient : corpus.patients)
    diagnoses.push_back(assign_to_conditions(patient.codes, corpus.catalog).diagnosis);
  NormalizedFeatureSet features(diagnoses, corpus.catalog, LambdaSpec::identity());
  double within = 0.0, between = 0.0;
  std::size_t n_within = 0, n_between = 0;
  for (std::size_t i = 0; i < diagnoses.size(); ++i) {
    for (std::size_t j = i + 1; j < diagnoses.size(); ++j) {
      const double k = features.normalized_kernel(i, j);
      if (corpus.patients[i].cluster == corpus.patients[j].cluster) {
        within += k;
        ++n_within;
      } else {
        between += k;
        ++n_between;
      }
    }
  }
  Json out;
  out["within_cluster_mean_kappa"] = within / static_cast<double>(n_within);
  out["between_cluster_mean_kappa"] = between / static_cast<double>(n_between);
  out["block_structure_holds"] =
      within / static_cast<double>(n_within) > between / static_cast<double>(n_between);
  return out;
}

int cmd_replicate_tables(const CLI::App& app, TablesArgs args) {
  const Json loaded = load_config_if_any(args.config_path);
  resolve(app, "--designs", loaded, "designs", args.designs);
  resolve(app, "--seed", loaded, "seed", args.seed);
  resolve(app, "--out", loaded, "out", args.out);
  resolve(app, "--fast", loaded, "fast", args.fast);
  resolve(app, "--reps", loaded, "reps", args.reps);
  resolve(app, "--n", loaded, "n", args.n);
  resolve(app, "--m", loaded, "m", args.m);
  resolve(app, "--iterations", loaded, "iterations", args.iterations);
  resolve(app, "--threads", loaded, "threads", args.threads);
  resolve(app, "--corpus-size", loaded, "corpus_size", args.corpus_size);

  if (args.out.empty()) throw InputError("--out is required");
  if (args.reps < 1) throw InputError("reps must be at least 1");
  const fs::path out_dir(args.out);
  ensure_out_dir(out_dir);

  int n = args.n;
  int iterations = args.iterations;
  if (args.fast) {
    n = 300;
    iterations = 2000;
  }

  Json report;
  report["mode"] = args.fast ? "FAST" : "FULL";
  report["n"] = n;
  report["m"] = args.m;
  report["reps"] = args.reps;
  report["iterations"] = iterations;
  Json designs = Json::array();

  std::stringstream stream(args.designs);
  std::string token;
  while (std::getline(stream, token, ',')) {
    if (token.empty()) continue;
    if (token.size() != 2 || (token[0] != 'c' && token[0] != 'r') || token[1] < '1' ||
        token[1] > '3')
      throw InputError("designs must be tokens like c1, r2 (got '" + token + "')");
    ProtocolOptions opts;
    opts.design = token[1] - '0';
    opts.kind = token[0] == 'c' ? ResponseKind::Classification : ResponseKind::Regression;
    opts.n = n;
    opts.m = args.m;
    opts.reps = args.reps;
    opts.iterations = iterations;
    opts.burn_in = iterations / 2;
    opts.thin = 5;
    opts.seed = parse_seed(args.seed);
    opts.threads = args.threads;
    opts.corpus_size = args.corpus_size;
    std::cerr << "running design " << token << " (" << args.reps << " replicates, n=" << n
              << ", iterations=" << iterations << ")\n";
    const auto result = run_design_replicates(opts);
    Json entry = opts.kind == ResponseKind::Classification
                     ? classification_json(result, args.fast)
                     : regression_json(result, args.fast);
    if (opts.design == 3)
      entry["surrogate"] = surrogate_block_structure(args.corpus_size, opts.seed);
    designs.push_back(entry);
  }
  report["designs"] = designs;

  Json config;
  config["command"] = "replicate-tables";
  config["designs"] = args.designs;
  config["seed"] = args.seed;
  config["out"] = args.out;
  config["fast"] = args.fast;
  config["reps"] = args.reps;
  config["n"] = args.n;
  config["m"] = args.m;
  config["iterations"] = args.iterations;
  config["threads"] = args.threads;
  config["corpus_size"] = args.corpus_size;
  write_config(out_dir, config);
  write_text_file((out_dir / "metrics.json").string(), report.dump(2) + "\n");
  std::cout << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"String-kernel Gaussian-process regression and classification "
               "over ICD diagnosis codes"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate simulation-design cohorts");
  simulate->add_option("--design", sim.design, "Design id (1, 2, or 3)");
  simulate->add_option("--model", sim.model, "clf or reg");
  simulate->add_option("--n", sim.n, "Training rows per cohort");
  simulate->add_option("--m", sim.m, "Test rows per cohort");
  simulate->add_option("--reps", sim.reps, "Number of replicate cohorts");
  simulate->add_option("--seed", sim.seed, "Base seed");
  simulate->add_option("--tau0-sq", sim.tau0_sq, "Regression noise variance");
  simulate->add_option("--corpus-size", sim.corpus_size,
                       "Surrogate corpus size (design 3)");
  simulate->add_option("--out", sim.out, "Output directory");
  simulate->add_option("--config", sim.config_path, "Resolved config JSON to replay");

  FitArgs fit;
  auto* fit_cmd = app.add_subcommand("fit", "Fit the GP model by MCMC");
  fit_cmd->add_option("--model", fit.model, "reg or clf");
  fit_cmd->add_option("--cohort", fit.cohort, "Cohort CSV");
  fit_cmd->add_option("--catalog", fit.catalog, "Condition catalog CSV");
  fit_cmd->add_option("--test", fit.test_cohort, "Separate test cohort CSV");
  fit_cmd->add_option("--train", fit.train, "Use the first N rows as training data");
  fit_cmd->add_option("--out", fit.out, "Output directory");
  fit_cmd->add_option("--kernel", fit.kernel, "se or exp");
  fit_cmd->add_option("--weights", fit.weights, "uniform or self");
  fit_cmd->add_option("--lmax", fit.lmax, "Maximum code length");
  fit_cmd->add_option("--iterations", fit.iterations, "MCMC iterations");
  fit_cmd->add_option("--burn-in", fit.burn_in, "Burn-in iterations");
  fit_cmd->add_option("--thin", fit.thin, "Thinning stride");
  fit_cmd->add_option("--seed", fit.seed, "Chain seed");
  fit_cmd->add_option("--a-phi", fit.a_phi, "Lower bound of phi");
  fit_cmd->add_option("--b-phi", fit.b_phi, "Upper bound of phi");
  fit_cmd->add_option("--b1", fit.b1, "Prior variance of u1");
  fit_cmd->add_option("--b2", fit.b2, "Prior variance of u2");
  fit_cmd->add_flag("--no-pseudo", fit.no_pseudo,
                    "Skip pseudo-patient tracking (classification)");
  fit_cmd->add_option("--pseudo-x", fit.pseudo_x,
                      "Comma-separated non-intercept covariates for pseudo patients");
  fit_cmd->add_option("--config", fit.config_path, "Resolved config JSON to replay");

  AssocArgs assoc;
  auto* assoc_cmd =
      app.add_subcommand("assoc", "Summarize pseudo-patient marginal associations");
  assoc_cmd->add_option("--fit", assoc.fit_dir, "Fit output directory");
  assoc_cmd->add_option("--catalog", assoc.catalog, "Condition catalog CSV");
  assoc_cmd->add_option("--out", assoc.out, "Associations CSV path");
  assoc_cmd->add_option("--min-estimate", assoc.min_estimate,
                        "Keep only rows with estimate above this value");

  GramArgs gram;
  auto* gram_cmd = app.add_subcommand("gram", "Export a kernel Gram matrix");
  gram_cmd->add_option("--cohort", gram.cohort, "Cohort CSV");
  gram_cmd->add_option("--catalog", gram.catalog, "Condition catalog CSV");
  gram_cmd->add_option("--out", gram.out, "Gram CSV path");
  gram_cmd->add_option("--kernel", gram.kernel,
                       "kappa2-raw, normalized, poly, exp, se, gexp, or matern");
  gram_cmd->add_option("--sigma2", gram.sigma2, "Kernel variance");
  gram_cmd->add_option("--phi", gram.phi, "Inverse length-scale");
  gram_cmd->add_option("--gamma", gram.gamma, "Exponent for gexp");
  gram_cmd->add_option("--order", gram.order, "Polynomial order");
  gram_cmd->add_option("--nu", gram.nu, "Matern smoothness (0.5, 1.5, 2.5)");
  gram_cmd->add_option("--weights", gram.weights, "uniform or self");
  gram_cmd->add_option("--lambda", gram.lambda, "identity or geometric");
  gram_cmd->add_option("--lambda-decay", gram.lambda_decay, "Geometric decay in (0,1)");
  gram_cmd->add_option("--lmax", gram.lmax, "Maximum code length");

  TablesArgs tables;
  auto* tables_cmd = app.add_subcommand(
      "replicate-tables", "Replicated simulate-fit-evaluate protocol with comparisons");
  tables_cmd->add_option("--designs", tables.designs, "Comma list from c1,c2,c3,r1,r2,r3");
  tables_cmd->add_option("--seed", tables.seed, "Base seed");
  tables_cmd->add_option("--out", tables.out, "Output directory");
  tables_cmd->add_flag("--fast", tables.fast, "n=300, 2000 iterations, labeled FAST");
  tables_cmd->add_option("--reps", tables.reps, "Replicates per design");
  tables_cmd->add_option("--n", tables.n, "Training size");
  tables_cmd->add_option("--m", tables.m, "Test size");
  tables_cmd->add_option("--iterations", tables.iterations, "MCMC iterations");
  tables_cmd->add_option("--threads", tables.threads,
                         "Worker threads (default: ICDGP_THREADS or hardware)");
  tables_cmd->add_option("--corpus-size", tables.corpus_size, "Surrogate corpus size");
  tables_cmd->add_option("--config", tables.config_path, "Resolved config JSON to replay");

  try {
    app.parse(argc, argv);
    if (simulate->parsed()) return cmd_simulate(*simulate, sim);
    if (fit_cmd->parsed()) return cmd_fit(*fit_cmd, fit);
    if (assoc_cmd->parsed()) return cmd_assoc(assoc);
    if (gram_cmd->parsed()) return cmd_gram(gram);
    if (tables_cmd->parsed()) return cmd_replicate_tables(*tables_cmd, tables);
    return kExitUsage;
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return kExitUsage;
  } catch (const InputError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const Error& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitRuntime;
  }
}
