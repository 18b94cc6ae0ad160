#pragma once

#include <cstdint>
#include <fstream>
#include <istream>
#include <json.hpp>
#include <ostream>
#include <string>
#include <vector>

#include "icdgp/detail/csv.hpp"
#include "icdgp/errors.hpp"
#include "icdgp/gp_classification.hpp"
#include "icdgp/gp_regression.hpp"
#include "icdgp/simdata.hpp"

namespace icdgp {

using Json = nlohmann::ordered_json;

// --- Cohort files -------------------------------------------------------
// Schema: patient_id,y,<covariates...>,codes with semicolon-separated codes;
// the intercept column is implicit.

struct CohortRow {
  std::string patient_id;
  double y = 0.0;
  std::vector<double> covariates;
  std::vector<IcdCode> codes;
};

struct CohortFile {
  std::vector<std::string> covariate_names;
  std::vector<CohortRow> rows;
};

inline void write_cohort_csv(std::ostream& out, const SyntheticCohort& cohort) {
  out << "patient_id,y,x,codes\n";
  for (const auto& patient : cohort.patients) {
    out << patient.id << ',' << detail::format_double(patient.y) << ','
        << detail::format_double(patient.x) << ',';
    for (std::size_t k = 0; k < patient.codes.size(); ++k) {
      if (k) out << ';';
      out << patient.codes[k].text();
    }
    out << '\n';
  }
}

inline CohortFile read_cohort_csv(std::istream& in,
                                  int max_code_length = kDefaultMaxCodeLength) {
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty cohort file");
  const auto header = detail::split_csv_line(line);
  if (header.size() < 3 || header.front() != "patient_id" || header[1] != "y" ||
      header.back() != "codes")
    throw InputError("cohort header must be patient_id,y,<covariates...>,codes");
  CohortFile file;
  file.covariate_names.assign(header.begin() + 2, header.end() - 1);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size())
      throw InputError("cohort row has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(header.size()));
    CohortRow row;
    row.patient_id = fields[0];
    row.y = std::stod(fields[1]);
    for (std::size_t j = 2; j + 1 < fields.size(); ++j)
      row.covariates.push_back(std::stod(fields[j]));
    const std::string& codes = fields.back();
    std::size_t start = 0;
    while (start <= codes.size() && !codes.empty()) {
      const auto end = codes.find(';', start);
      const auto piece = codes.substr(start, end == std::string::npos ? std::string::npos
                                                                      : end - start);
      if (!piece.empty()) row.codes.push_back(IcdCode::parse(piece, max_code_length));
      if (end == std::string::npos) break;
      start = end + 1;
    }
    file.rows.push_back(std::move(row));
  }
  return file;
}

inline CohortFile read_cohort_csv_file(const std::string& path,
                                       int max_code_length = kDefaultMaxCodeLength) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open cohort file: " + path);
  return read_cohort_csv(in, max_code_length);
}

inline Json cohort_sidecar(const SyntheticCohort& cohort, int rep) {
  Json meta;
  meta["design"] = cohort.design;
  meta["model"] = cohort.kind == ResponseKind::Classification ? "clf" : "reg";
  meta["rep"] = rep;
  meta["seed"] = cohort.seed;
  meta["n"] = cohort.n_train;
  meta["m"] = cohort.n_test;
  meta["tau0_sq"] = cohort.tau0_sq;
  return meta;
}

// --- Draws files ----------------------------------------------------------

inline void write_regression_draws_csv(std::ostream& out, const RegressionDraws& draws) {
  const auto p = draws.beta.cols();
  const auto m = draws.fstar.cols();
  out << "iter";
  for (Eigen::Index j = 0; j < p; ++j) out << ",beta_" << (j + 1);
  out << ",sigma2,phi,tau2";
  for (Eigen::Index j = 0; j < m; ++j) out << ",fstar_" << (j + 1);
  for (Eigen::Index j = 0; j < m; ++j) out << ",ystar_" << (j + 1);
  out << '\n';
  for (std::size_t r = 0; r < draws.iteration.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    out << draws.iteration[r];
    for (Eigen::Index j = 0; j < p; ++j)
      out << ',' << detail::format_double(draws.beta(row, j));
    out << ',' << detail::format_double(draws.sigma2[row]) << ','
        << detail::format_double(draws.phi[row]) << ','
        << detail::format_double(draws.tau2[row]);
    for (Eigen::Index j = 0; j < m; ++j)
      out << ',' << detail::format_double(draws.fstar(row, j));
    for (Eigen::Index j = 0; j < m; ++j)
      out << ',' << detail::format_double(draws.ystar(row, j));
    out << '\n';
  }
}

inline void write_classification_draws_csv(std::ostream& out,
                                           const ClassificationDraws& draws,
                                           Eigen::Index m) {
  const auto p = draws.beta.cols();
  out << "iter";
  for (Eigen::Index j = 0; j < p; ++j) out << ",beta_" << (j + 1);
  out << ",sigma2,phi";
  for (Eigen::Index j = 0; j < m; ++j) out << ",pstar_" << (j + 1);
  for (Eigen::Index j = 0; j < m; ++j) out << ",ystar_" << (j + 1);
  out << '\n';
  for (std::size_t r = 0; r < draws.iteration.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    out << draws.iteration[r];
    for (Eigen::Index j = 0; j < p; ++j)
      out << ',' << detail::format_double(draws.beta(row, j));
    out << ',' << detail::format_double(draws.sigma2[row]) << ','
        << detail::format_double(draws.phi[row]);
    for (Eigen::Index j = 0; j < m; ++j)
      out << ',' << detail::format_double(draws.pstar(row, j));
    for (Eigen::Index j = 0; j < m; ++j)
      out << ',' << detail::format_double(draws.ystar(row, j));
    out << '\n';
  }
}

// --- Summaries and associations -------------------------------------------

inline Json summary_to_json(const PosteriorSummary& summary) {
  Json out;
  out["level"] = summary.level;
  Json quantities;
  for (const auto& [name, q] : summary.quantities) {
    Json entry;
    entry["mean"] = q.mean;
    entry["sd"] = q.sd;
    entry["lower"] = q.lower;
    entry["upper"] = q.upper;
    quantities[name] = entry;
  }
  out["quantities"] = quantities;
  return out;
}

inline void write_associations_csv(std::ostream& out,
                                   std::span<const AssociationEstimate> estimates) {
  out << "condition,estimate,lower95,upper95\n";
  for (const auto& row : estimates) {
    out << detail::csv_quote(row.condition) << ',' << detail::format_double(row.estimate)
        << ',' << detail::format_double(row.lower) << ','
        << detail::format_double(row.upper) << '\n';
  }
}

// --- Resolved configs -------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t hash = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 1099511628211ULL;
  }
  return hash;
}

inline std::string config_hash(const Json& config) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return std::string(buf);
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write file: " + path);
  out << content;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read file: " + path);
  std::string content((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
  return content;
}

}  // namespace icdgp
