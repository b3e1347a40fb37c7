#pragma once

#include <json.hpp>
#include <string>

#include "sunprobit/model.hpp"
#include "sunprobit/sun.hpp"
#include "sunprobit/vb.hpp"

namespace sunprobit {

// JSON round trips at full double precision. Infinite bound sentinels map to
// the strings "inf" and "-inf"; matrices are row-major arrays with explicit
// shape.

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json sun_params_to_json(const SunParams& params);
SunParams sun_params_from_json(const nlohmann::json& j);

nlohmann::json likelihood_to_json(const ProbitLikelihood& lik);
ProbitLikelihood likelihood_from_json(const nlohmann::json& j);

nlohmann::json vb_state_to_json(const VBState& state);
VBState vb_state_from_json(const nlohmann::json& j);

std::string family_to_string(Family family);
Family family_from_string(const std::string& name);

}  // namespace sunprobit
