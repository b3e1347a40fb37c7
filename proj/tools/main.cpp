#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sunprobit/errors.hpp"
#include "sunprobit/model.hpp"
#include "sunprobit/oracles.hpp"
#include "sunprobit/serialize.hpp"
#include "sunprobit/sun.hpp"
#include "sunprobit/vb.hpp"

using nlohmann::json;
using namespace sunprobit;

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // Trim surrounding whitespace.
    const auto a = field.find_first_not_of(" \t\r");
    const auto b = field.find_last_not_of(" \t\r");
    out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

Csv read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path);
  Csv csv;
  std::string line;
  if (!std::getline(in, line)) throw DataError("malformed csv: empty file " + path);
  csv.header = split_line(line);
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto row = split_line(line);
    if (row.size() != csv.header.size())
      throw DataError("malformed csv: row with " + std::to_string(row.size()) +
                      " fields, expected " + std::to_string(csv.header.size()));
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

double parse_number(const std::string& s, const std::string& column) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw DataError("non-numeric value \"" + s + "\" in predictor column " + column);
  }
}

struct RunConfig {
  Family family = Family::Sequential;
  int L = 2;
  std::string method = "exact";
  int draws = 1000;
  std::uint64_t seed = 0;
  bool has_seed = false;
  std::string response = "y";
  bool standardize = true;
  bool intercept = true;
  bool want_evidence = false;
  double cdf_tol = 1e-6;
  double vb_tol = 1e-6;
  int vb_max_iter = 1000;
  json prior_spec;
  json sigma_spec;
  std::vector<int> holdout;  // 1-based row indices
  SunCaps caps;
};

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (j.contains("family")) cfg.family = family_from_string(j.at("family"));
  if (j.contains("L")) cfg.L = j.at("L").get<int>();
  if (cfg.L < 2) throw ConfigError("L must be at least 2");
  if (j.contains("method")) cfg.method = j.at("method").get<std::string>();
  if (cfg.method != "exact" && cfg.method != "pfm" && cfg.method != "mf")
    throw ConfigError("method must be one of exact, pfm, mf");
  if (j.contains("draws")) cfg.draws = j.at("draws").get<int>();
  if (cfg.draws < 1) throw ConfigError("draws must be positive");
  if (j.contains("seed")) {
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.has_seed = true;
  }
  if (j.contains("response")) cfg.response = j.at("response").get<std::string>();
  if (j.contains("standardize")) cfg.standardize = j.at("standardize").get<bool>();
  if (j.contains("intercept")) cfg.intercept = j.at("intercept").get<bool>();
  if (j.contains("evidence")) cfg.want_evidence = j.at("evidence").get<bool>();
  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    if (t.contains("cdf_tol")) cfg.cdf_tol = t.at("cdf_tol").get<double>();
    if (t.contains("vb_tol")) cfg.vb_tol = t.at("vb_tol").get<double>();
    if (t.contains("max_iter")) cfg.vb_max_iter = t.at("max_iter").get<int>();
  }
  if (j.contains("prior")) cfg.prior_spec = j.at("prior");
  if (j.contains("Sigma")) cfg.sigma_spec = j.at("Sigma");
  if (j.contains("holdout")) cfg.holdout = j.at("holdout").get<std::vector<int>>();
  if (j.contains("caps")) {
    const auto& c = j.at("caps");
    if (c.contains("sampler")) cfg.caps.sampler_cap = c.at("sampler").get<int>();
    if (c.contains("cdf")) cfg.caps.cdf_cap = c.at("cdf").get<int>();
  }
  return cfg;
}

struct Preprocess {
  std::vector<std::string> columns;  // predictor csv columns, model order
  std::vector<std::string> dropped;
  std::vector<double> center, scale;
  bool standardize = true;
  bool intercept = true;
  std::vector<std::string> label_names;  // empty when labels are numeric

  json to_json() const {
    return {{"columns", columns},       {"dropped", dropped},
            {"center", center},         {"scale", scale},
            {"standardize", standardize}, {"intercept", intercept},
            {"labels", label_names}};
  }
  static Preprocess from_json(const json& j) {
    Preprocess p;
    p.columns = j.at("columns").get<std::vector<std::string>>();
    p.dropped = j.at("dropped").get<std::vector<std::string>>();
    p.center = j.at("center").get<std::vector<double>>();
    p.scale = j.at("scale").get<std::vector<double>>();
    p.standardize = j.at("standardize").get<bool>();
    p.intercept = j.at("intercept").get<bool>();
    p.label_names = j.at("labels").get<std::vector<std::string>>();
    return p;
  }
};

struct Prepared {
  ModelSpec spec;
  Dataset train;
  Dataset holdout;
  Eigen::VectorXi holdout_y;
  std::vector<int> holdout_rows;
  Preprocess prep;
};

int column_index(const Csv& csv, const std::string& name) {
  for (std::size_t i = 0; i < csv.header.size(); ++i)
    if (csv.header[i] == name) return static_cast<int>(i);
  return -1;
}

Eigen::VectorXi parse_labels(const Csv& csv, int ycol, int* L,
                             std::vector<std::string>* names) {
  const int n = static_cast<int>(csv.rows.size());
  Eigen::VectorXi y(n);
  bool numeric = true;
  for (const auto& r : csv.rows) {
    const std::string& s = r[ycol];
    char* end = nullptr;
    std::strtol(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') {
      numeric = false;
      break;
    }
  }
  if (numeric) {
    int mx = 0;
    for (int i = 0; i < n; ++i) {
      y(i) = static_cast<int>(std::strtol(csv.rows[i][ycol].c_str(), nullptr, 10));
      if (y(i) < 1) throw DataError("numeric class labels must be >= 1");
      mx = std::max(mx, y(i));
    }
    *L = std::max(*L, mx);
    return y;
  }
  // String labels, mapped in first-appearance order.
  std::map<std::string, int> seen;
  for (int i = 0; i < n; ++i) {
    const std::string& s = csv.rows[i][ycol];
    auto it = seen.find(s);
    if (it == seen.end()) {
      it = seen.emplace(s, static_cast<int>(names->size()) + 1).first;
      names->push_back(s);
    }
    y(i) = it->second;
  }
  *L = std::max(*L, static_cast<int>(names->size()));
  return y;
}

// Raw predictor table from the csv for the non-discrete-choice families,
// followed by standardization, zero-column dropping and the intercept.
Prepared prepare_vector_families(const RunConfig& cfg, const Csv& csv) {
  Prepared out;
  const int ycol = column_index(csv, cfg.response);
  if (ycol < 0) throw DataError("response column " + cfg.response + " not found");
  const int n = static_cast<int>(csv.rows.size());
  if (n == 0) throw DataError("malformed csv: no data rows");

  int L = cfg.L;
  out.prep.standardize = cfg.standardize;
  out.prep.intercept = cfg.intercept;
  Eigen::VectorXi y = parse_labels(csv, ycol, &L, &out.prep.label_names);

  std::vector<int> cols;
  for (std::size_t c = 0; c < csv.header.size(); ++c)
    if (static_cast<int>(c) != ycol) cols.push_back(static_cast<int>(c));

  Eigen::MatrixXd raw(n, cols.size());
  for (int i = 0; i < n; ++i)
    for (std::size_t c = 0; c < cols.size(); ++c)
      raw(i, c) = parse_number(csv.rows[i][cols[c]], csv.header[cols[c]]);

  // Split holdout rows (1-based) out of training.
  std::vector<bool> held(n, false);
  for (int r : cfg.holdout) {
    if (r < 1 || r > n) throw ConfigError("holdout row index out of range");
    held[r - 1] = true;
  }
  std::vector<int> tr_rows, ho_rows;
  for (int i = 0; i < n; ++i) (held[i] ? ho_rows : tr_rows).push_back(i);

  // Drop always-zero columns, standardize using training rows only.
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const std::string& name = csv.header[cols[c]];
    bool all_zero = true;
    for (int i : tr_rows) all_zero = all_zero && raw(i, c) == 0.0;
    if (all_zero) {
      out.prep.dropped.push_back(name);
      continue;
    }
    double mean = 0.0, sd = 0.0;
    if (cfg.standardize && !tr_rows.empty()) {
      for (int i : tr_rows) mean += raw(i, c);
      mean /= tr_rows.size();
      for (int i : tr_rows) sd += (raw(i, c) - mean) * (raw(i, c) - mean);
      sd = std::sqrt(sd / tr_rows.size());
    }
    out.prep.columns.push_back(name);
    if (cfg.standardize && sd > 0.0) {
      out.prep.center.push_back(mean);
      out.prep.scale.push_back(2.0 * sd);  // target standard deviation 0.5
    } else {
      out.prep.center.push_back(0.0);
      out.prep.scale.push_back(1.0);
    }
  }

  const int kept = static_cast<int>(out.prep.columns.size());
  const int p = kept + (cfg.intercept ? 1 : 0);
  if (p == 0) throw DataError("no usable predictor columns");

  auto fill = [&](const std::vector<int>& rows, Dataset* d, Eigen::VectorXi* yy) {
    d->n = static_cast<int>(rows.size());
    d->X.resize(d->n, p);
    if (yy) yy->resize(d->n);
    d->y.resize(d->n);
    for (int i = 0; i < d->n; ++i) {
      int at = 0;
      if (cfg.intercept) d->X(i, at++) = 1.0;
      int rc = 0;
      for (std::size_t c = 0; c < cols.size(); ++c) {
        const std::string& name = csv.header[cols[c]];
        if (std::find(out.prep.dropped.begin(), out.prep.dropped.end(), name) !=
            out.prep.dropped.end())
          continue;
        d->X(i, at++) =
            (raw(rows[i], c) - out.prep.center[rc]) / out.prep.scale[rc];
        ++rc;
      }
      d->y(i) = y(rows[i]);
      if (yy) (*yy)(i) = y(rows[i]);
    }
  };
  fill(tr_rows, &out.train, nullptr);
  fill(ho_rows, &out.holdout, &out.holdout_y);
  out.holdout_rows = ho_rows;

  out.spec.family = cfg.family;
  out.spec.L = L;
  out.spec.p = p;
  if (cfg.sigma_spec.is_object()) out.spec.Sigma = matrix_from_json(cfg.sigma_spec);
  return out;
}

// Discrete choice: predictors arrive as per-class columns named base_1..base_L.
Prepared prepare_discrete_choice(const RunConfig& cfg, const Csv& csv) {
  Prepared out;
  const int ycol = column_index(csv, cfg.response);
  if (ycol < 0) throw DataError("response column " + cfg.response + " not found");
  const int n = static_cast<int>(csv.rows.size());
  if (n == 0) throw DataError("malformed csv: no data rows");

  int L = cfg.L;
  out.prep.standardize = cfg.standardize;
  out.prep.intercept = false;  // a shared intercept cancels in utility differences
  Eigen::VectorXi y = parse_labels(csv, ycol, &L, &out.prep.label_names);

  // Group columns by base name: base_l for l in 1..L.
  std::vector<std::string> bases;
  std::map<std::string, std::vector<int>> by_base;
  for (std::size_t c = 0; c < csv.header.size(); ++c) {
    if (static_cast<int>(c) == ycol) continue;
    const std::string& name = csv.header[c];
    const auto us = name.rfind('_');
    if (us == std::string::npos)
      throw DataError("discrete choice columns must be named base_<class>, got " + name);
    const int cls = std::atoi(name.substr(us + 1).c_str());
    if (cls < 1 || cls > L)
      throw DataError("column " + name + " has class suffix outside 1.." +
                      std::to_string(L));
    const std::string base = name.substr(0, us);
    auto it = by_base.find(base);
    if (it == by_base.end()) {
      by_base[base] = std::vector<int>(L, -1);
      bases.push_back(base);
    }
    by_base[base][cls - 1] = static_cast<int>(c);
  }
  for (const auto& b : bases)
    for (int l = 0; l < L; ++l)
      if (by_base[b][l] < 0)
        throw DataError("predictor " + b + " is missing class column " + b + "_" +
                        std::to_string(l + 1));

  std::vector<bool> held(n, false);
  for (int r : cfg.holdout) {
    if (r < 1 || r > n) throw ConfigError("holdout row index out of range");
    held[r - 1] = true;
  }
  std::vector<int> tr_rows, ho_rows;
  for (int i = 0; i < n; ++i) (held[i] ? ho_rows : tr_rows).push_back(i);

  // Standardize per predictor base, pooled across classes.
  const int p = static_cast<int>(bases.size());
  if (p == 0) throw DataError("no usable predictor columns");
  std::vector<Eigen::MatrixXd> cells(n, Eigen::MatrixXd(L, p));
  for (int i = 0; i < n; ++i)
    for (int jp = 0; jp < p; ++jp)
      for (int l = 0; l < L; ++l)
        cells[i](l, jp) =
            parse_number(csv.rows[i][by_base[bases[jp]][l]], bases[jp]);

  for (int jp = 0; jp < p; ++jp) {
    double mean = 0.0, sd = 0.0;
    const double cnt = static_cast<double>(tr_rows.size()) * L;
    if (cfg.standardize && cnt > 0) {
      for (int i : tr_rows) mean += cells[i].col(jp).sum();
      mean /= cnt;
      for (int i : tr_rows)
        sd += (cells[i].col(jp).array() - mean).square().sum();
      sd = std::sqrt(sd / cnt);
    }
    out.prep.columns.push_back(bases[jp]);
    if (cfg.standardize && sd > 0.0) {
      out.prep.center.push_back(mean);
      out.prep.scale.push_back(2.0 * sd);
    } else {
      out.prep.center.push_back(0.0);
      out.prep.scale.push_back(1.0);
    }
  }

  auto fill = [&](const std::vector<int>& rows, Dataset* d, Eigen::VectorXi* yy) {
    d->n = static_cast<int>(rows.size());
    d->y.resize(d->n);
    if (yy) yy->resize(d->n);
    d->X_alt.resize(d->n);
    for (int i = 0; i < d->n; ++i) {
      d->X_alt[i].resize(L, p);
      for (int jp = 0; jp < p; ++jp)
        d->X_alt[i].col(jp) = (cells[rows[i]].col(jp).array() -
                               out.prep.center[jp]) /
                              out.prep.scale[jp];
      d->y(i) = y(rows[i]);
      if (yy) (*yy)(i) = y(rows[i]);
    }
  };
  fill(tr_rows, &out.train, nullptr);
  fill(ho_rows, &out.holdout, &out.holdout_y);
  out.holdout_rows = ho_rows;

  out.spec.family = cfg.family;
  out.spec.L = L;
  out.spec.p = p;
  if (cfg.sigma_spec.is_object()) out.spec.Sigma = matrix_from_json(cfg.sigma_spec);
  return out;
}

Prepared prepare(const RunConfig& cfg, const std::string& data_path) {
  const Csv csv = read_csv(data_path);
  if (cfg.family == Family::DiscreteChoice)
    return prepare_discrete_choice(cfg, csv);
  return prepare_vector_families(cfg, csv);
}

SunParams build_prior(const RunConfig& cfg, int q) {
  if (cfg.prior_spec.is_null() || !cfg.prior_spec.contains("type") ||
      cfg.prior_spec.at("type") == "gaussian") {
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(q);
    if (cfg.prior_spec.is_object() && cfg.prior_spec.contains("xi"))
      xi = vector_from_json(cfg.prior_spec.at("xi"));
    if (xi.size() != q)
      throw ConfigError("prior xi has length " + std::to_string(xi.size()) +
                        ", model needs " + std::to_string(q));
    Eigen::MatrixXd omega;
    if (cfg.prior_spec.is_object() && cfg.prior_spec.contains("Omega")) {
      omega = matrix_from_json(cfg.prior_spec.at("Omega"));
    } else {
      double scale = 5.0;
      if (cfg.prior_spec.is_object() && cfg.prior_spec.contains("omega_scale"))
        scale = cfg.prior_spec.at("omega_scale").get<double>();
      omega = scale * scale * Eigen::MatrixXd::Identity(q, q);
    }
    return SunParams::gaussian(std::move(xi), omega);
  }
  if (cfg.prior_spec.at("type") == "sun") {
    SunParams prior = sun_params_from_json(cfg.prior_spec);
    if (prior.q() != q)
      throw ConfigError("sun prior has q=" + std::to_string(prior.q()) +
                        ", model needs " + std::to_string(q));
    return prior;
  }
  throw ConfigError("prior type must be gaussian or sun");
}

double empirical_quantile(std::vector<double> sorted, double p) {
  const std::size_t n = sorted.size();
  const double pos = p * (n - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const std::size_t hi = std::min(lo + 1, n - 1);
  const double frac = pos - lo;
  return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

json summarize_draws(const Eigen::MatrixXd& draws) {
  json out = json::array();
  const int q = static_cast<int>(draws.cols());
  const int T = static_cast<int>(draws.rows());
  for (int jx = 0; jx < q; ++jx) {
    std::vector<double> col(T);
    for (int t = 0; t < T; ++t) col[t] = draws(t, jx);
    std::sort(col.begin(), col.end());
    const double mean = draws.col(jx).mean();
    const double sd = std::sqrt(
        (draws.col(jx).array() - mean).square().sum() / std::max(T - 1, 1));
    out.push_back({{"name", "beta_" + std::to_string(jx + 1)},
                   {"mean", mean},
                   {"sd", sd},
                   {"q025", empirical_quantile(col, 0.025)},
                   {"q50", empirical_quantile(col, 0.5)},
                   {"q975", empirical_quantile(col, 0.975)}});
  }
  return out;
}

std::string label_name(const Preprocess& prep, int cls) {
  if (!prep.label_names.empty() &&
      cls <= static_cast<int>(prep.label_names.size()))
    return prep.label_names[cls - 1];
  return std::to_string(cls);
}

Eigen::MatrixXd holdout_covariates(const Prepared& prep, int i) {
  if (prep.spec.family == Family::DiscreteChoice) return prep.holdout.X_alt[i];
  return prep.holdout.X.row(i);
}

void write_draws_csv(const std::string& path, const Eigen::MatrixXd& draws) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open draws output file " + path);
  char buf[40];
  for (int jx = 0; jx < draws.cols(); ++jx)
    out << (jx ? "," : "") << "beta_" << jx + 1;
  out << "\n";
  for (int t = 0; t < draws.rows(); ++t) {
    for (int jx = 0; jx < draws.cols(); ++jx) {
      std::snprintf(buf, sizeof(buf), "%.17g", draws(t, jx));
      out << (jx ? "," : "") << buf;
    }
    out << "\n";
  }
}

void require_seed(const RunConfig& cfg) {
  if (!cfg.has_seed)
    throw ConfigError("a seed is required for stochastic methods");
}

struct CommonArgs {
  std::string config_path, data_path, newdata_path, artifact_path, out_path;
  std::string draws_out;
  std::int64_t seed = -1;
  int threads = 1;
  bool timing = false;
};

RunConfig load_config(const CommonArgs& args) {
  std::ifstream in(args.config_path);
  if (!in) throw ConfigError("cannot open config file " + args.config_path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg = parse_config(j);
  if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.has_seed = true;
  }
  return cfg;
}

void emit(const CommonArgs& args, json out,
          std::chrono::steady_clock::time_point start) {
  if (args.timing) {
    const auto elapsed = std::chrono::duration<double>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    out["timing"] = {{"seconds", elapsed}};
  }
  const std::string text = out.dump(2) + "\n";
  if (args.out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    std::ofstream f(args.out_path);
    if (!f) throw DataError("cannot open output file " + args.out_path);
    f << text;
  }
}

json predict_rows(const RunConfig& cfg, const Prepared& prep,
                  const SunParams& prior, const ProbitLikelihood& lik,
                  const std::optional<VBState>& vb_state,
                  const std::optional<AugmentedForm>& aug,
                  const Dataset& newdata, const Eigen::VectorXi* truth) {
  CdfSettings cdf;
  cdf.tol = cfg.cdf_tol;
  json rows = json::array();
  int correct = 0;
  RngStream rng(cfg.seed);
  for (int i = 0; i < newdata.n; ++i) {
    Eigen::MatrixXd x = prep.spec.family == Family::DiscreteChoice
                            ? newdata.X_alt[i]
                            : Eigen::MatrixXd(newdata.X.row(i));
    Eigen::VectorXd probs;
    if (cfg.method == "exact") {
      double raw = 0.0;
      probs = predict_exact(prior, prep.spec, lik, x, cdf, &raw, cfg.caps);
    } else {
      RngStream row_rng = rng.split(static_cast<std::uint64_t>(i));
      probs = predict_vb(*vb_state, *aug, prep.spec, x, cfg.draws, row_rng);
    }
    int best = 0;
    for (int l = 1; l < prep.spec.L; ++l)
      if (probs(l) > probs(best)) best = l;
    json row = {{"probabilities", vector_to_json(probs)},
                {"label", label_name(prep.prep, best + 1)}};
    if (truth) {
      row["observed"] = label_name(prep.prep, (*truth)(i));
      if ((*truth)(i) == best + 1) ++correct;
    }
    rows.push_back(std::move(row));
  }
  json out = {{"rows", std::move(rows)}};
  if (truth && newdata.n > 0)
    out["accuracy"] = static_cast<double>(correct) / newdata.n;
  return out;
}

int cmd_fit(const CommonArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = load_config(args);
  require_seed(cfg);
  Prepared prep = prepare(cfg, args.data_path);
  const ProbitLikelihood lik = build_likelihood(prep.spec, prep.train);
  const SunParams prior = build_prior(cfg, prep.spec.q());

  CdfSettings cdf;
  cdf.tol = cfg.cdf_tol;

  json out;
  out["schema"] = 1;
  out["method"] = cfg.method;
  out["seed"] = cfg.seed;
  out["model"] = {{"family", family_to_string(cfg.family)},
                  {"L", prep.spec.L},
                  {"p", prep.spec.p},
                  {"q", prep.spec.q()},
                  {"n", prep.train.n},
                  {"m", lik.m}};
  if (prep.spec.Sigma.size() > 0)
    out["model"]["Sigma"] = matrix_to_json(prep.spec.Sigma);
  out["preprocessing"] = prep.prep.to_json();
  out["prior"] = sun_params_to_json(prior);
  out["likelihood"] = likelihood_to_json(lik);

  json flags;
  Eigen::MatrixXd draws;
  std::optional<VBState> vb_state;
  std::optional<AugmentedForm> aug;

  if (cfg.method == "exact") {
    const int latent = prior.h() + lik.m;
    if (latent > cfg.caps.sampler_cap)
      throw DimensionTooLarge(
          "method=exact needs h+m <= " + std::to_string(cfg.caps.sampler_cap) +
          " but got " + std::to_string(latent) +
          "; use method=pfm for large augmented dimensions");
    const SunParams pst = posterior_update(prior, lik);
    out["posterior"] = sun_params_to_json(pst);
    RngStream rng(cfg.seed);
    TmvnOptions topt;
    topt.cdf = cdf;
    const PosteriorDraws pd = sample_posterior(pst, cfg.draws, rng, topt, cfg.caps);
    draws = pd.draws;
    flags["sampler_method"] = pd.tmvn_meta.method;
    flags["degraded_sampler"] = pd.tmvn_meta.degraded;
  } else {
    const SunParams pst = posterior_update(prior, lik);
    aug = augmented_form(pst, lik);
    const Blocking blocking = default_blocking(lik, prior.h());
    VbOptions vopt;
    vopt.tol = cfg.vb_tol;
    vopt.max_iter = cfg.vb_max_iter;
    vopt.moments.cdf = cdf;
    if (cfg.method == "pfm") {
      vb_state = cavi_pfm(*aug, blocking, vopt);
      out["vb_state"] = vb_state_to_json(*vb_state);
      out["convergence"] = {{"converged", vb_state->converged},
                            {"iterations", vb_state->iterations}};
      flags["vb_converged"] = vb_state->converged;
      RngStream rng(cfg.seed);
      TmvnOptions topt;
      topt.cdf = cdf;
      draws = sample_vb(*vb_state, *aug, cfg.draws, rng, topt).draws;
    } else {
      const MfState mf = cavi_mf(*aug, blocking, vopt);
      out["convergence"] = {{"converged", mf.converged},
                            {"iterations", mf.iterations}};
      flags["vb_converged"] = mf.converged;
      out["mf_mean"] = vector_to_json(mf.mean_beta);
      RngStream rng(cfg.seed);
      draws = sample_mvn(mf.mean_beta, aug->V_pst, cfg.draws, rng);
    }
  }
  out["coefficients"] = summarize_draws(draws);
  out["flags"] = std::move(flags);

  if (cfg.want_evidence) {
    if (cfg.method != "exact")
      throw ConfigError("log evidence is only available with method=exact");
    out["log_evidence"] = log_evidence(prior, lik, cdf, cfg.caps);
  }

  if (prep.holdout.n > 0) {
    json ho = predict_rows(cfg, prep, prior, lik, vb_state, aug, prep.holdout,
                           &prep.holdout_y);
    json idx = json::array();
    for (int r : prep.holdout_rows) idx.push_back(r + 1);
    ho["row_indices"] = std::move(idx);
    out["holdout"] = std::move(ho);
  }

  if (!args.draws_out.empty()) write_draws_csv(args.draws_out, draws);
  emit(args, std::move(out), start);
  return 0;
}

int cmd_evidence(const CommonArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  RunConfig cfg = load_config(args);
  Prepared prep = prepare(cfg, args.data_path);
  const ProbitLikelihood lik = build_likelihood(prep.spec, prep.train);
  const SunParams prior = build_prior(cfg, prep.spec.q());
  CdfSettings cdf;
  cdf.tol = cfg.cdf_tol;
  json out = {{"schema", 1},
              {"log_evidence", log_evidence(prior, lik, cdf, cfg.caps)},
              {"model",
               {{"family", family_to_string(cfg.family)},
                {"L", prep.spec.L},
                {"n", prep.train.n},
                {"m", lik.m}}}};
  emit(args, std::move(out), start);
  return 0;
}

// Transform a raw newdata csv with the preprocessing recorded at fit time.
Dataset transform_newdata(const ModelSpec& spec, const Preprocess& prep,
                          const std::string& path) {
  const Csv csv = read_csv(path);
  Dataset d;
  d.n = static_cast<int>(csv.rows.size());
  d.y = Eigen::VectorXi::Ones(d.n);
  if (spec.family == Family::DiscreteChoice) {
    d.X_alt.resize(d.n);
    for (int i = 0; i < d.n; ++i) {
      d.X_alt[i].resize(spec.L, spec.p);
      for (int jp = 0; jp < spec.p; ++jp)
        for (int l = 0; l < spec.L; ++l) {
          const std::string name =
              prep.columns[jp] + "_" + std::to_string(l + 1);
          const int c = column_index(csv, name);
          if (c < 0) throw DataError("newdata is missing column " + name);
          d.X_alt[i](l, jp) =
              (parse_number(csv.rows[i][c], name) - prep.center[jp]) /
              prep.scale[jp];
        }
    }
    return d;
  }
  d.X.resize(d.n, spec.p);
  for (int i = 0; i < d.n; ++i) {
    int at = 0;
    if (prep.intercept) d.X(i, at++) = 1.0;
    for (std::size_t c = 0; c < prep.columns.size(); ++c) {
      const int col = column_index(csv, prep.columns[c]);
      if (col < 0) throw DataError("newdata is missing column " + prep.columns[c]);
      d.X(i, at++) =
          (parse_number(csv.rows[i][col], prep.columns[c]) - prep.center[c]) /
          prep.scale[c];
    }
  }
  return d;
}

int cmd_predict(const CommonArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  if (args.newdata_path.empty())
    throw ConfigError("predict requires --newdata");
  if (args.config_path.empty() && args.artifact_path.empty())
    throw ConfigError("predict requires --artifact or --config");
  RunConfig cfg;
  if (!args.config_path.empty()) {
    cfg = load_config(args);
  } else if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.has_seed = true;
  }

  json out;
  out["schema"] = 1;

  if (!args.artifact_path.empty()) {
    std::ifstream in(args.artifact_path);
    if (!in) throw DataError("cannot open artifact file " + args.artifact_path);
    json art;
    try {
      in >> art;
    } catch (const json::exception& e) {
      throw DataError(std::string("artifact is not valid JSON: ") + e.what());
    }
    Prepared prep;
    prep.prep = Preprocess::from_json(art.at("preprocessing"));
    prep.spec.family = family_from_string(art.at("model").at("family"));
    prep.spec.L = art.at("model").at("L").get<int>();
    prep.spec.p = art.at("model").at("p").get<int>();
    if (art.at("model").contains("Sigma"))
      prep.spec.Sigma = matrix_from_json(art.at("model").at("Sigma"));
    const SunParams prior = sun_params_from_json(art.at("prior"));
    const ProbitLikelihood lik = likelihood_from_json(art.at("likelihood"));
    cfg.method = art.at("method").get<std::string>();
    if (!cfg.has_seed && art.contains("seed")) {
      cfg.seed = art.at("seed").get<std::uint64_t>();
      cfg.has_seed = true;
    }
    std::optional<VBState> vb_state;
    std::optional<AugmentedForm> aug;
    if (cfg.method != "exact") {
      require_seed(cfg);
      if (!art.contains("vb_state"))
        throw ConfigError("artifact lacks a vb_state; refit with method=pfm");
      vb_state = vb_state_from_json(art.at("vb_state"));
      aug = augmented_form(posterior_update(prior, lik), lik);
    }
    const Dataset nd = transform_newdata(prep.spec, prep.prep, args.newdata_path);
    out.update(predict_rows(cfg, prep, prior, lik, vb_state, aug, nd, nullptr));
    emit(args, std::move(out), start);
    return 0;
  }

  if (args.data_path.empty())
    throw ConfigError("predict requires --artifact or --data");
  Prepared prep = prepare(cfg, args.data_path);
  const ProbitLikelihood lik = build_likelihood(prep.spec, prep.train);
  const SunParams prior = build_prior(cfg, prep.spec.q());
  std::optional<VBState> vb_state;
  std::optional<AugmentedForm> aug;
  if (cfg.method != "exact") {
    require_seed(cfg);
    aug = augmented_form(posterior_update(prior, lik), lik);
    VbOptions vopt;
    vopt.tol = cfg.vb_tol;
    vopt.max_iter = cfg.vb_max_iter;
    vb_state = cavi_pfm(*aug, default_blocking(lik, prior.h()), vopt);
  }
  const Dataset nd = transform_newdata(prep.spec, prep.prep, args.newdata_path);
  out.update(predict_rows(cfg, prep, prior, lik, vb_state, aug, nd, nullptr));
  emit(args, std::move(out), start);
  return 0;
}

// Hidden fixture-regeneration entry point for the reference oracles.
int cmd_oracle(const CommonArgs& args) {
  const auto start = std::chrono::steady_clock::now();
  std::ifstream in(args.config_path);
  if (!in) throw ConfigError("cannot open config file " + args.config_path);
  json j;
  in >> j;
  const std::string kind = j.at("oracle").get<std::string>();
  json out;
  out["schema"] = 1;
  out["oracle"] = kind;

  if (kind == "rejection") {
    const SunParams params = sun_params_from_json(j.at("params"));
    const int T = j.value("draws", 100000);
    RngStream rng(j.at("seed").get<std::uint64_t>());
    const PosteriorDraws d = rejection_sample_sun(params, T, rng);
    Eigen::VectorXd mean = d.draws.colwise().mean();
    out["mean"] = vector_to_json(mean);
    Eigen::VectorXd sd(params.q());
    for (int c = 0; c < params.q(); ++c)
      sd(c) = std::sqrt((d.draws.col(c).array() - mean(c)).square().sum() /
                        (T - 1));
    out["sd"] = vector_to_json(sd);
    out["acceptance"] = d.tmvn_meta.acceptance_rate;
    emit(args, std::move(out), start);
    return 0;
  }

  RunConfig cfg = parse_config(j.at("run"));
  if (args.seed >= 0) {
    cfg.seed = static_cast<std::uint64_t>(args.seed);
    cfg.has_seed = true;
  }
  Prepared prep = prepare(cfg, args.data_path);
  const ProbitLikelihood lik = build_likelihood(prep.spec, prep.train);
  const SunParams prior = build_prior(cfg, prep.spec.q());

  if (kind == "quadrature") {
    const OracleReport rep = quadrature_evidence(prior, lik, j.value("nodes", 201));
    out["log_evidence"] = rep.estimate(0);
    out["nodes"] = rep.draws_or_nodes;
    out["tolerance"] = rep.tolerance;
  } else if (kind == "gibbs") {
    require_seed(cfg);
    const int iters = j.value("iters", 100000);
    const int burnin = j.value("burnin", iters / 5);
    RngStream rng(cfg.seed);
    const PosteriorDraws d =
        gibbs_sampler(prior, lik, iters, burnin, rng, j.value("thin", 10));
    Eigen::VectorXd mean = d.draws.colwise().mean();
    out["mean"] = vector_to_json(mean);
    Eigen::VectorXd se(prep.spec.q()), ess(prep.spec.q());
    for (int c = 0; c < prep.spec.q(); ++c) {
      ess(c) = effective_sample_size(d.draws.col(c));
      const double var = (d.draws.col(c).array() - mean(c)).square().sum() /
                         (d.draws.rows() - 1);
      se(c) = std::sqrt(var / ess(c));
    }
    out["std_error"] = vector_to_json(se);
    out["ess"] = vector_to_json(ess);
  } else {
    throw ConfigError("oracle must be gibbs, rejection or quadrature");
  }
  emit(args, std::move(out), start);
  return 0;
}

int dispatch(const std::string& cmd, const CommonArgs& args) {
  try {
    if (cmd == "fit") return cmd_fit(args);
    if (cmd == "evidence") return cmd_evidence(args);
    if (cmd == "predict") return cmd_predict(args);
    return cmd_oracle(args);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DimensionTooLarge& e) {
    std::fprintf(stderr, "cap exceeded: %s\n", e.what());
    return 5;
  } catch (const QOverCap& e) {
    std::fprintf(stderr, "cap exceeded: %s\n", e.what());
    return 5;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 4;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian multinomial probit inference with unified skew-normal posteriors"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<CLI::App*> subs;
  for (const char* name : {"fit", "evidence", "predict", "oracle"}) {
    CLI::App* sub = app.add_subcommand(name);
    CLI::Option* cfg_opt =
        sub->add_option("--config", args.config_path, "JSON run configuration");
    if (std::string(name) != "predict") cfg_opt->required();
    sub->add_option("--data", args.data_path, "training data CSV");
    sub->add_option("--newdata", args.newdata_path, "CSV of units to predict");
    sub->add_option("--artifact", args.artifact_path, "fit output JSON");
    sub->add_option("--out", args.out_path, "output JSON path (default stdout)");
    sub->add_option("--draws-out", args.draws_out, "CSV of posterior draws");
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--threads", args.threads,
                    "accepted for compatibility; execution is sequential");
    sub->add_flag("--timing", args.timing, "include wall-clock timing in output");
    subs.push_back(sub);
  }
  app.get_subcommand("oracle")->group("");  // hidden

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if ((cmd == "fit" || cmd == "evidence") && args.data_path.empty()) {
    std::fprintf(stderr, "config error: %s requires --data\n", cmd.c_str());
    return 2;
  }
  return dispatch(cmd, args);
}
