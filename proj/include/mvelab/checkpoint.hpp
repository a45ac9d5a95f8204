#pragma once

// JSON snapshots of trained agents and dynamics models. Numbers are written
// with round-trip precision, so a reload reproduces every parameter bit.

#include <string>

#include "json.hpp"

#include "mvelab/ddpg.hpp"
#include "mvelab/dyn_model.hpp"

namespace mvelab {

nlohmann::json to_json(const MlpParams& params);
MlpParams mlp_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AgentState& agent);
AgentState agent_from_json(const nlohmann::json& j);

nlohmann::json to_json(const DynamicsModel& model);
/// `env` must match the environment the model was trained on.
DynamicsModel model_from_json(const nlohmann::json& j, const EnvSpec& env);

void save_agent(const std::string& path, const AgentState& agent);
AgentState load_agent(const std::string& path);
void save_model(const std::string& path, const DynamicsModel& model);
DynamicsModel load_model(const std::string& path, const EnvSpec& env);

}  // namespace mvelab
