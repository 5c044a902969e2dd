#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sbfm/bridge.hpp"
#include "sbfm/field.hpp"
#include "sbfm/integrate.hpp"
#include "sbfm/objective.hpp"
#include "sbfm/optim.hpp"
#include "sbfm/toy_data.hpp"

namespace sbfm {

inline std::string to_string(Activation a) {
    return a == Activation::Tanh ? "tanh" : "gelu-approx";
}
inline std::string to_string(HeadMode m) { return m == HeadMode::Mlp ? "mlp" : "linear"; }
inline std::string to_string(ObjectiveKind k) {
    return k == ObjectiveKind::Sbfm ? "sbfm" : "cfm";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "gelu-approx") return Activation::GeluApprox;
    throw std::invalid_argument("unknown activation '" + s + "' (tanh | gelu-approx)");
}
inline HeadMode head_mode_from_string(const std::string& s) {
    if (s == "mlp") return HeadMode::Mlp;
    if (s == "linear") return HeadMode::Linear;
    throw std::invalid_argument("unknown head mode '" + s + "' (mlp | linear)");
}
inline ObjectiveKind objective_kind_from_string(const std::string& s) {
    if (s == "sbfm") return ObjectiveKind::Sbfm;
    if (s == "cfm") return ObjectiveKind::Cfm;
    throw std::invalid_argument("unknown objective kind '" + s + "' (sbfm | cfm)");
}

inline nlohmann::ordered_json to_json(const FieldConfig& c) {
    return {{"d_a", c.d_a},
            {"d_v_total", c.d_v_total},
            {"trunk_width", c.trunk_width},
            {"trunk_depth", c.trunk_depth},
            {"head_width", c.head_width},
            {"head_depth", c.head_depth},
            {"cond_a_dim", c.cond_a_dim},
            {"cond_v_dim", c.cond_v_dim},
            {"time_embed_dim", c.time_embed_dim},
            {"activation", to_string(c.activation)},
            {"heads", to_string(c.heads)}};
}

inline FieldConfig field_config_from_json(const nlohmann::json& j) {
    FieldConfig c;
    c.d_a = j.at("d_a").get<std::size_t>();
    c.d_v_total = j.at("d_v_total").get<std::size_t>();
    c.trunk_width = j.at("trunk_width").get<std::size_t>();
    c.trunk_depth = j.at("trunk_depth").get<std::size_t>();
    c.head_width = j.at("head_width").get<std::size_t>();
    c.head_depth = j.at("head_depth").get<std::size_t>();
    c.cond_a_dim = j.at("cond_a_dim").get<std::size_t>();
    c.cond_v_dim = j.at("cond_v_dim").get<std::size_t>();
    c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.heads = head_mode_from_string(j.at("heads").get<std::string>());
    return c;
}

inline nlohmann::ordered_json to_json(const BridgeSchedule& s) {
    return {{"sigma", s.sigma}, {"eps_clamp", s.eps_clamp}};
}

inline nlohmann::ordered_json to_json(const LossConfig& c) {
    return {{"lambda", c.lambda},
            {"objective_kind", to_string(c.kind)},
            {"schedule", to_json(c.schedule)},
            {"time_distribution", "uniform-clamped"}};
}

inline nlohmann::ordered_json to_json(const OptimConfig& c) {
    return {{"beta1", c.beta1},
            {"beta2", c.beta2},
            {"eps", c.eps},
            {"weight_decay", c.weight_decay},
            {"lr_init", c.lr_init},
            {"lr_peak", c.lr_peak},
            {"warmup_steps", c.warmup_steps},
            {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},
            {"grad_clip", c.grad_clip},
            {"seed", c.seed}};
}

inline nlohmann::ordered_json to_json(const ToyDataConfig& c) {
    return {{"seed", c.seed},
            {"n_pairs", c.n_pairs},
            {"n_objects", c.n_objects},
            {"objects_per_scene", c.objects_per_scene},
            {"t_a", c.t_a},
            {"c_a", c.c_a},
            {"t_v", c.t_v},
            {"c_v", c.c_v}};
}

inline nlohmann::ordered_json to_json(const IntegrationPlan& p) {
    return {{"n_steps", p.n_steps},
            {"t_start", p.t_start},
            {"t_end", p.t_end},
            {"record_path", p.record_path}};
}

}  // namespace sbfm
