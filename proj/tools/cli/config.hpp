#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "json.hpp"

#include "gano/helmholtz.hpp"
#include "gano/optloop.hpp"
#include "gano/pipeline.hpp"
#include "gano/stablesdf.hpp"
#include "gano/surrogate.hpp"
#include "gano/synthetic_flow.hpp"

namespace gano::cli {

using nlohmann::json;

/// Every configurable value with its default; docs/config.md mirrors this.
json default_config();

/// Defaults merged with the file at path (when given) and the seed override.
/// Unknown keys and type mismatches throw ValidationError naming the key.
json resolve_config(const std::filesystem::path& path, const std::optional<std::uint64_t>& seed);

/// Recursively overlays patch on base; patch keys must exist in base.
void overlay(json& base, const json& patch, const std::string& where = "");

/// FNV-1a 64 of the compact dump, as 16 hex digits.
std::string config_hash(const json& cfg);

helm::DatasetConfig dataset_config(const json& cfg);
sdf::SdfTrainConfig sdf_train_config(const json& cfg);
sdf::DecoderConfig decoder_config(const json& cfg);
surrogate::SurrogateConfig surrogate_config(const json& cfg, const std::string& task);
surrogate::SurrogateTrainConfig surrogate_train_config(const json& cfg);
pipeline::LatentFitConfig latent_fit_config(const json& cfg);
/// Loop settings of a section ("invert", "optimize" or "optimize_cv").
opt::OptRunConfig run_config(const json& cfg, const std::string& section);
flow::FlowParams flow_params(const json& cfg);
forces::CvSpec cv_spec(const json& cfg);

}  // namespace gano::cli
