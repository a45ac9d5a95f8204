#include "mvelab/checkpoint.hpp"

#include <fstream>

#include "mvelab/errors.hpp"

namespace mvelab {

using nlohmann::json;

namespace {

json vec_json(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vec vec_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::string act_name(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "identity";
}

Activation act_from(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ContractViolation("checkpoint: unknown activation '" + s + "'");
}

json adam_json(const AdamState& a) {
  return {{"m", vec_json(a.first_moment)}, {"v", vec_json(a.second_moment)},
          {"step", a.step_count},          {"lr", a.learning_rate},
          {"beta1", a.beta1},              {"beta2", a.beta2},
          {"eps", a.epsilon}};
}

AdamState adam_from(const json& j) {
  AdamState a;
  a.first_moment = vec_from(j.at("m"));
  a.second_moment = vec_from(j.at("v"));
  a.step_count = j.at("step").get<std::int64_t>();
  a.learning_rate = j.at("lr").get<double>();
  a.beta1 = j.at("beta1").get<double>();
  a.beta2 = j.at("beta2").get<double>();
  a.epsilon = j.at("eps").get<double>();
  return a;
}

void write_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "checkpoint: cannot write '" + path + "'");
  out << j.dump() << "\n";
}

json read_file(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "checkpoint: cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ContractViolation("checkpoint: '" + path + "': " + e.what());
  }
}

}  // namespace

json to_json(const MlpParams& p) {
  return {{"layers", p.layer_sizes},
          {"hidden", act_name(p.hidden_activation)},
          {"output", act_name(p.output_activation)},
          {"values", vec_json(p.values)}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams p;
  p.layer_sizes = j.at("layers").get<std::vector<int>>();
  p.hidden_activation = act_from(j.at("hidden").get<std::string>());
  p.output_activation = act_from(j.at("output").get<std::string>());
  p.values = vec_from(j.at("values"));
  require(p.values.size() == parameter_count(p.layer_sizes),
          "checkpoint: parameter count does not match layer sizes");
  return p;
}

json to_json(const AgentState& a) {
  return {{"actor", to_json(a.actor)},
          {"critic", to_json(a.critic)},
          {"target_actor", to_json(a.target_actor)},
          {"target_critic", to_json(a.target_critic)},
          {"actor_opt", adam_json(a.actor_opt)},
          {"critic_opt", adam_json(a.critic_opt)},
          {"decay", a.decay},
          {"scale_mid", vec_json(a.scale.mid)},
          {"scale_half", vec_json(a.scale.half)}};
}

AgentState agent_from_json(const json& j) {
  try {
    AgentState a;
    a.actor = mlp_from_json(j.at("actor"));
    a.critic = mlp_from_json(j.at("critic"));
    a.target_actor = mlp_from_json(j.at("target_actor"));
    a.target_critic = mlp_from_json(j.at("target_critic"));
    a.actor_opt = adam_from(j.at("actor_opt"));
    a.critic_opt = adam_from(j.at("critic_opt"));
    a.decay = j.at("decay").get<double>();
    a.scale.mid = vec_from(j.at("scale_mid"));
    a.scale.half = vec_from(j.at("scale_half"));
    return a;
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("checkpoint: malformed agent: ") + e.what());
  }
}

json to_json(const DynamicsModel& m) {
  json j = {{"env", m.env.name}, {"oracle", m.oracle}};
  if (!m.oracle) {
    j["net"] = to_json(m.net);
    j["input_mean"] = vec_json(m.input_mean);
    j["input_std"] = vec_json(m.input_std);
    j["delta_mean"] = vec_json(m.delta_mean);
    j["delta_std"] = vec_json(m.delta_std);
    j["trained_on"] = m.trained_on;
    j["optimizer"] = adam_json(m.optimizer);
  }
  return j;
}

DynamicsModel model_from_json(const json& j, const EnvSpec& env) {
  try {
    require(j.at("env").get<std::string>() == env.name,
            "checkpoint: model was trained on '" + j.at("env").get<std::string>() + "'");
    if (j.at("oracle").get<bool>()) return make_oracle_model(env);
    DynamicsModel m;
    m.env = env;
    m.net = mlp_from_json(j.at("net"));
    m.input_mean = vec_from(j.at("input_mean"));
    m.input_std = vec_from(j.at("input_std"));
    m.delta_mean = vec_from(j.at("delta_mean"));
    m.delta_std = vec_from(j.at("delta_std"));
    m.trained_on = j.at("trained_on").get<std::int64_t>();
    m.optimizer = adam_from(j.at("optimizer"));
    return m;
  } catch (const json::exception& e) {
    throw ContractViolation(std::string("checkpoint: malformed model: ") + e.what());
  }
}

void save_agent(const std::string& path, const AgentState& agent) { write_file(path, to_json(agent)); }
AgentState load_agent(const std::string& path) { return agent_from_json(read_file(path)); }
void save_model(const std::string& path, const DynamicsModel& model) {
  write_file(path, to_json(model));
}
DynamicsModel load_model(const std::string& path, const EnvSpec& env) {
  return model_from_json(read_file(path), env);
}

}  // namespace mvelab
