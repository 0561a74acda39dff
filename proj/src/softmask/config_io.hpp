// Copyright 2026 The SoftMask Authors
// SPDX-License-Identifier: Apache-2.0

// JSON (de)serialization of the model, training and augmentation configs.
// Parsing is strict: unknown keys and wrongly typed values raise ConfigError
// naming the offending key. Missing keys keep their defaults.

#pragma once

#include <json.hpp>

#include <string>

#include "softmask/augmentation.hpp"
#include "softmask/model.hpp"
#include "softmask/trainer.hpp"

namespace softmask {

nlohmann::json to_json(const ModelConfig& config);
nlohmann::json to_json(const TrainConfig& config);
nlohmann::json to_json(const AugmentConfig& config);

// `where` prefixes error messages, e.g. "model".
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& where = "model");
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where = "train");
AugmentConfig augment_config_from_json(const nlohmann::json& j, const std::string& where = "augment");

std::string to_string(MaskSource source);
MaskSource mask_source_from_string(const std::string& name);

}  // namespace softmask
