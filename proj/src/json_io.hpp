#pragma once

// JSON mapping of the configuration structs, shared by report and benchmark
// serialization. Readers start from the struct defaults and override only the
// keys present, rejecting unknown keys so typos do not pass silently.

#include <initializer_list>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dataprov/error.hpp"
#include "dataprov/mlp.hpp"
#include "dataprov/synth.hpp"
#include "dataprov/verifier.hpp"

namespace dataprov::detail {

using nlohmann::json;

inline void reject_unknown_keys(const json& obj, std::string_view where,
                                std::initializer_list<std::string_view> known) {
  if (!obj.is_object()) throw Error(ErrorCode::kInvalidConfig, std::string(where) + " must be an object");
  for (const auto& item : obj.items()) {
    bool found = false;
    for (auto k : known) found = found || item.key() == k;
    if (!found) throw Error(ErrorCode::kInvalidConfig, "unknown key '" + item.key() + "' in " + std::string(where));
  }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidConfig, std::string("bad value for '") + key + "': " + e.what());
  }
}

json to_json(const learner::LossSpec& loss);
learner::LossSpec loss_from_json(const json& j);

json to_json(const learner::TrainConfig& config);
learner::TrainConfig train_config_from_json(const json& j, learner::TrainConfig base = {});

json to_json(const verifier::PromptParams& prompt);
verifier::PromptParams prompt_from_json(const json& j, verifier::PromptParams base);

json to_json(const verifier::VerificationConfig& config);
verifier::VerificationConfig verification_config_from_json(const json& j, verifier::VerificationConfig base = {});

json to_json(const synth::WorldParams& world);
synth::WorldParams world_from_json(const json& j, synth::WorldParams base = {});

}  // namespace dataprov::detail
