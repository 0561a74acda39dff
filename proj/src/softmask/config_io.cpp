// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

#include "softmask/config_io.hpp"

#include <set>

#include "softmask/errors.hpp"

namespace softmask {

using json = nlohmann::json;

namespace {

// Reads fields out of a JSON object and complains about anything left over.
class StrictReader {
 public:
  StrictReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    const json& v = j_.at(key);
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      out = v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong value type");
    }
  }

  // Marks a key as handled by the caller.
  const json* take(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown config key '" + where_ + "." + key + "'");
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

std::string to_string(MaskSource source) {
  switch (source) {
    case MaskSource::kGradCam:
      return "gradcam";
    case MaskSource::kCrossAttention:
      return "cross_attention";
    case MaskSource::kRandom:
      return "random";
  }
  return "gradcam";
}

MaskSource mask_source_from_string(const std::string& name) {
  if (name == "gradcam") return MaskSource::kGradCam;
  if (name == "cross_attention") return MaskSource::kCrossAttention;
  if (name == "random") return MaskSource::kRandom;
  throw ConfigError("unknown mask source '" + name + "'");
}

json to_json(const ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},         {"patch_size", c.patch_size},
              {"image_size", c.image_size},       {"max_text_len", c.max_text_len},
              {"fusion_layers", c.fusion_layers}, {"num_heads", c.num_heads},
              {"vision_layers", c.vision_layers}, {"text_layers", c.text_layers},
              {"vocab_size", c.vocab_size},       {"proj_dim", c.proj_dim},
              {"mlp_ratio", c.mlp_ratio},         {"init_temperature", c.init_temperature}};
}

ModelConfig model_config_from_json(const json& j, const std::string& where) {
  ModelConfig c;
  StrictReader r(j, where);
  r.read("embed_dim", c.embed_dim);
  r.read("patch_size", c.patch_size);
  r.read("image_size", c.image_size);
  r.read("max_text_len", c.max_text_len);
  r.read("fusion_layers", c.fusion_layers);
  r.read("num_heads", c.num_heads);
  r.read("vision_layers", c.vision_layers);
  r.read("text_layers", c.text_layers);
  r.read("vocab_size", c.vocab_size);
  r.read("proj_dim", c.proj_dim);
  r.read("mlp_ratio", c.mlp_ratio);
  r.read("init_temperature", c.init_temperature);
  r.finish();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"batch_size", c.batch_size},
              {"queue_size", c.queue_size},
              {"gamma", c.gamma},
              {"mlm_rate", c.mlm_rate},
              {"momentum", c.momentum},
              {"lr_init", c.lr_init},
              {"lr_peak", c.lr_peak},
              {"lr_final", c.lr_final},
              {"warmup_steps", c.warmup_steps},
              {"total_steps", c.total_steps},
              {"weight_decay", c.weight_decay},
              {"adam_beta1", c.adam_beta1},
              {"adam_beta2", c.adam_beta2},
              {"adam_eps", c.adam_eps},
              {"seed", c.seed},
              {"mask_target_sum", c.mask_target_sum},
              {"checkpoint_every", c.checkpoint_every},
              {"softmask", c.softmask},
              {"focal_itc", c.focal_itc},
              {"mmda", c.mmda},
              {"softmask_for_mlm", c.softmask_for_mlm},
              {"randmask_p", c.randmask_p},
              {"mask_source", to_string(c.mask_source)},
              {"itc_clean_text", c.itc_clean_text},
              {"uniform_negatives", c.negatives == NegativeSampling::kUniform}};
}

TrainConfig train_config_from_json(const json& j, const std::string& where) {
  TrainConfig c;
  StrictReader r(j, where);
  r.read("batch_size", c.batch_size);
  r.read("queue_size", c.queue_size);
  r.read("gamma", c.gamma);
  r.read("mlm_rate", c.mlm_rate);
  r.read("momentum", c.momentum);
  r.read("lr_init", c.lr_init);
  r.read("lr_peak", c.lr_peak);
  r.read("lr_final", c.lr_final);
  r.read("warmup_steps", c.warmup_steps);
  r.read("total_steps", c.total_steps);
  r.read("weight_decay", c.weight_decay);
  r.read("adam_beta1", c.adam_beta1);
  r.read("adam_beta2", c.adam_beta2);
  r.read("adam_eps", c.adam_eps);
  r.read("seed", c.seed);
  r.read("mask_target_sum", c.mask_target_sum);
  r.read("checkpoint_every", c.checkpoint_every);
  r.read("softmask", c.softmask);
  r.read("focal_itc", c.focal_itc);
  r.read("mmda", c.mmda);
  r.read("softmask_for_mlm", c.softmask_for_mlm);
  r.read("randmask_p", c.randmask_p);
  std::string source = to_string(c.mask_source);
  r.read("mask_source", source);
  c.mask_source = mask_source_from_string(source);
  r.read("itc_clean_text", c.itc_clean_text);
  bool uniform = false;
  r.read("uniform_negatives", uniform);
  c.negatives = uniform ? NegativeSampling::kUniform : NegativeSampling::kHard;
  r.finish();
  return c;
}

json to_json(const AugmentConfig& c) {
  json ops = json::array();
  for (const RandAugmentOp& op : c.randaugment_ops) ops.push_back(json::array({op.name, op.magnitude}));
  return json{{"enabled", c.enabled},
              {"crop_size", c.crop_size},
              {"randaugment_num_ops", c.randaugment_num_ops},
              {"randaugment_ops", ops},
              {"jitter_strength", c.jitter_strength},
              {"grayscale_prob", c.grayscale_prob},
              {"blur_prob", c.blur_prob},
              {"blur_sigma_min", c.blur_sigma_min},
              {"blur_sigma_max", c.blur_sigma_max}};
}

AugmentConfig augment_config_from_json(const json& j, const std::string& where) {
  AugmentConfig c;
  StrictReader r(j, where);
  r.read("enabled", c.enabled);
  r.read("crop_size", c.crop_size);
  r.read("randaugment_num_ops", c.randaugment_num_ops);
  if (const json* ops = r.take("randaugment_ops")) {
    if (!ops->is_array()) throw ConfigError(where + ".randaugment_ops: expected a list of [name, magnitude]");
    c.randaugment_ops.clear();
    for (const json& op : *ops) {
      if (!op.is_array() || op.size() != 2 || !op[0].is_string() || !op[1].is_number()) {
        throw ConfigError(where + ".randaugment_ops: expected [name, magnitude] pairs");
      }
      c.randaugment_ops.push_back(RandAugmentOp{op[0].get<std::string>(), op[1].get<double>()});
    }
  }
  r.read("jitter_strength", c.jitter_strength);
  r.read("grayscale_prob", c.grayscale_prob);
  r.read("blur_prob", c.blur_prob);
  r.read("blur_sigma_min", c.blur_sigma_min);
  r.read("blur_sigma_max", c.blur_sigma_max);
  r.finish();
  return c;
}

}  // namespace softmask
