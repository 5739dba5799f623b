#include "json_io.hpp"

namespace dataprov::detail {

json to_json(const learner::LossSpec& loss) {
  json j{{"kind", learner::to_string(loss)}};
  if (loss.kind == learner::LossKind::kFocal) {
    j["gamma"] = loss.gamma;
    j["alpha"] = loss.alpha;
  }
  return j;
}

learner::LossSpec loss_from_json(const json& j) {
  if (j.is_string()) return learner::parse_loss(j.get<std::string>());
  reject_unknown_keys(j, "loss", {"kind", "gamma", "alpha"});
  std::string kind = "ce";
  read_field(j, "kind", kind);
  learner::LossSpec loss = learner::parse_loss(kind);
  read_field(j, "gamma", loss.gamma);
  read_field(j, "alpha", loss.alpha);
  return loss;
}

json to_json(const learner::TrainConfig& config) {
  return json{{"epochs", config.epochs},
              {"batch_size", config.batch_size},
              {"learning_rate", config.learning_rate},
              {"weight_decay", config.weight_decay},
              {"loss", to_json(config.loss)},
              {"shuffle_seed", config.shuffle_seed}};
}

learner::TrainConfig train_config_from_json(const json& j, learner::TrainConfig base) {
  reject_unknown_keys(j, "train config",
                      {"epochs", "batch_size", "learning_rate", "weight_decay", "loss", "shuffle_seed"});
  read_field(j, "epochs", base.epochs);
  read_field(j, "batch_size", base.batch_size);
  read_field(j, "learning_rate", base.learning_rate);
  read_field(j, "weight_decay", base.weight_decay);
  read_field(j, "shuffle_seed", base.shuffle_seed);
  if (j.contains("loss")) base.loss = loss_from_json(j["loss"]);
  return base;
}

json to_json(const verifier::PromptParams& prompt) {
  return json{{"id", prompt.id}, {"shift_scale", prompt.shift_scale}, {"seed", prompt.seed}};
}

verifier::PromptParams prompt_from_json(const json& j, verifier::PromptParams base) {
  reject_unknown_keys(j, "prompt", {"id", "shift_scale", "seed"});
  read_field(j, "id", base.id);
  read_field(j, "shift_scale", base.shift_scale);
  read_field(j, "seed", base.seed);
  return base;
}

json to_json(const verifier::VerificationConfig& config) {
  return json{{"shadow_n_per_class", config.shadow_n_per_class},
              {"val_n_per_class", config.val_n_per_class},
              {"inference_batch_size", config.inference_batch_size},
              {"alpha", config.alpha},
              {"variant", verifier::to_string(config.variant)},
              {"logit_access", config.logit_access},
              {"shadow_hidden_width", config.shadow_hidden_width},
              {"shadow_train", to_json(config.shadow_train)},
              {"shadow_prompt", to_json(config.shadow_prompt)},
              {"validation_prompt", to_json(config.validation_prompt)}};
}

verifier::VerificationConfig verification_config_from_json(const json& j, verifier::VerificationConfig base) {
  reject_unknown_keys(j, "verification",
                      {"shadow_n_per_class", "val_n_per_class", "inference_batch_size", "alpha", "variant",
                       "logit_access", "shadow_hidden_width", "shadow_train", "shadow_prompt",
                       "validation_prompt"});
  read_field(j, "shadow_n_per_class", base.shadow_n_per_class);
  read_field(j, "val_n_per_class", base.val_n_per_class);
  read_field(j, "inference_batch_size", base.inference_batch_size);
  read_field(j, "alpha", base.alpha);
  read_field(j, "logit_access", base.logit_access);
  read_field(j, "shadow_hidden_width", base.shadow_hidden_width);
  if (j.contains("variant")) base.variant = verifier::parse_variant(j["variant"].get<std::string>());
  if (j.contains("shadow_train")) base.shadow_train = train_config_from_json(j["shadow_train"], base.shadow_train);
  if (j.contains("shadow_prompt")) base.shadow_prompt = prompt_from_json(j["shadow_prompt"], base.shadow_prompt);
  if (j.contains("validation_prompt")) {
    base.validation_prompt = prompt_from_json(j["validation_prompt"], base.validation_prompt);
  }
  return base;
}

json to_json(const synth::WorldParams& world) {
  return json{{"num_classes", world.num_classes},
              {"dim", world.dim},
              {"prototype_radius", world.prototype_radius},
              {"prototype_seed", world.prototype_seed},
              {"noise_scale", world.noise_scale},
              {"transform_mix", world.transform_mix},
              {"bias_scale", world.bias_scale},
              {"heavy_tail_mix", world.heavy_tail_mix},
              {"tail_scale", world.tail_scale}};
}

synth::WorldParams world_from_json(const json& j, synth::WorldParams base) {
  reject_unknown_keys(j, "world",
                      {"num_classes", "dim", "prototype_radius", "prototype_seed", "noise_scale",
                       "transform_mix", "bias_scale", "heavy_tail_mix", "tail_scale"});
  read_field(j, "num_classes", base.num_classes);
  read_field(j, "dim", base.dim);
  read_field(j, "prototype_radius", base.prototype_radius);
  read_field(j, "prototype_seed", base.prototype_seed);
  read_field(j, "noise_scale", base.noise_scale);
  read_field(j, "transform_mix", base.transform_mix);
  read_field(j, "bias_scale", base.bias_scale);
  read_field(j, "heavy_tail_mix", base.heavy_tail_mix);
  read_field(j, "tail_scale", base.tail_scale);
  return base;
}

}  // namespace dataprov::detail
