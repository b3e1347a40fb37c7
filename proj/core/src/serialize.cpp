#include "sunprobit/serialize.hpp"

#include "sunprobit/errors.hpp"
#include "sunprobit/normal.hpp"

namespace sunprobit {

namespace {

nlohmann::json encode_double(double x) {
  if (is_pos_inf(x)) return "inf";
  if (is_neg_inf(x)) return "-inf";
  return x;
}

double decode_double(const nlohmann::json& j) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
    throw ConfigError("expected a number or \"inf\"/\"-inf\", got \"" + s + "\"");
  }
  return j.get<double>();
}

}  // namespace

nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(encode_double(v(i)));
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw ConfigError("expected an array for a vector");
  Eigen::VectorXd out(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out(i) = decode_double(j[i]);
  return out;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json data = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) data.push_back(encode_double(m(i, j)));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") ||
      !j.contains("data"))
    throw ConfigError("expected {rows, cols, data} for a matrix");
  const int rows = j.at("rows").get<int>();
  const int cols = j.at("cols").get<int>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 ||
      static_cast<int>(data.size()) != rows * cols)
    throw ConfigError("matrix data length does not match its shape");
  Eigen::MatrixXd out(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int c = 0; c < cols; ++c) out(i, c) = decode_double(data[i * cols + c]);
  return out;
}

nlohmann::json sun_params_to_json(const SunParams& params) {
  return {{"xi", vector_to_json(params.xi())},
          {"Omega", matrix_to_json(params.Omega().values())},
          {"Delta", matrix_to_json(params.Delta())},
          {"gamma", vector_to_json(params.gamma())},
          {"Gamma", matrix_to_json(params.h() > 0
                                       ? params.Gamma().values()
                                       : Eigen::MatrixXd(0, 0))}};
}

SunParams sun_params_from_json(const nlohmann::json& j) {
  return SunParams(vector_from_json(j.at("xi")),
                   matrix_from_json(j.at("Omega")),
                   matrix_from_json(j.at("Delta")),
                   vector_from_json(j.at("gamma")),
                   matrix_from_json(j.at("Gamma")));
}

nlohmann::json likelihood_to_json(const ProbitLikelihood& lik) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : lik.lambda_blocks) blocks.push_back(matrix_to_json(b));
  nlohmann::json units = nlohmann::json::array();
  for (const auto& [at, b] : lik.unit_blocks) units.push_back({at, b});
  return {{"m", lik.m},
          {"q", lik.q},
          {"Xbar", matrix_to_json(lik.Xbar)},
          {"lambda_blocks", std::move(blocks)},
          {"unit_blocks", std::move(units)}};
}

ProbitLikelihood likelihood_from_json(const nlohmann::json& j) {
  ProbitLikelihood lik;
  lik.m = j.at("m").get<int>();
  lik.q = j.at("q").get<int>();
  lik.Xbar = matrix_from_json(j.at("Xbar"));
  for (const auto& b : j.at("lambda_blocks"))
    lik.lambda_blocks.push_back(matrix_from_json(b));
  for (const auto& u : j.at("unit_blocks"))
    lik.unit_blocks.emplace_back(u[0].get<int>(), u[1].get<int>());
  if (lik.Xbar.rows() != lik.m || lik.Xbar.cols() != lik.q)
    throw ConfigError("likelihood JSON has inconsistent dimensions");
  return lik;
}

nlohmann::json vb_state_to_json(const VBState& state) {
  nlohmann::json out;
  out["blocks"] = state.blocks;
  nlohmann::json w = nlohmann::json::array();
  nlohmann::json gc = nlohmann::json::array();
  nlohmann::json center = nlohmann::json::array();
  nlohmann::json mean = nlohmann::json::array();
  nlohmann::json cov = nlohmann::json::array();
  for (std::size_t c = 0; c < state.blocks.size(); ++c) {
    w.push_back(matrix_to_json(state.W[c]));
    gc.push_back(matrix_to_json(state.Gamma_c[c].values()));
    center.push_back(vector_to_json(state.center[c]));
    mean.push_back(vector_to_json(state.mean[c]));
    cov.push_back(matrix_to_json(state.cov[c]));
  }
  out["W"] = std::move(w);
  out["Gamma_c"] = std::move(gc);
  out["center"] = std::move(center);
  out["mean"] = std::move(mean);
  out["cov"] = std::move(cov);
  out["iterations"] = state.iterations;
  out["converged"] = state.converged;
  out["trace"] = state.trace;
  return out;
}

VBState vb_state_from_json(const nlohmann::json& j) {
  VBState state;
  state.blocks = j.at("blocks").get<std::vector<std::vector<int>>>();
  for (const auto& m : j.at("W")) state.W.push_back(matrix_from_json(m));
  for (const auto& m : j.at("Gamma_c"))
    state.Gamma_c.push_back(chol_psd(matrix_from_json(m)));
  for (const auto& v : j.at("center"))
    state.center.push_back(vector_from_json(v));
  for (const auto& v : j.at("mean")) state.mean.push_back(vector_from_json(v));
  for (const auto& m : j.at("cov")) state.cov.push_back(matrix_from_json(m));
  state.iterations = j.at("iterations").get<int>();
  state.converged = j.at("converged").get<bool>();
  state.trace = j.at("trace").get<std::vector<double>>();
  const std::size_t n = state.blocks.size();
  if (state.W.size() != n || state.Gamma_c.size() != n ||
      state.center.size() != n || state.mean.size() != n ||
      state.cov.size() != n)
    throw ConfigError("VB state JSON has inconsistent block counts");
  return state;
}

std::string family_to_string(Family family) {
  switch (family) {
    case Family::DiscreteChoice: return "discrete_choice";
    case Family::ClassSpecific: return "class_specific";
    case Family::Sequential: return "sequential";
  }
  throw ConfigError("unknown model family");
}

Family family_from_string(const std::string& name) {
  if (name == "discrete_choice") return Family::DiscreteChoice;
  if (name == "class_specific") return Family::ClassSpecific;
  if (name == "sequential") return Family::Sequential;
  throw ConfigError("unknown model family \"" + name + "\"");
}

}  // namespace sunprobit
