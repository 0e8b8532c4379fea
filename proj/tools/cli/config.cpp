#include "cli/config.hpp"

#include <cstdio>
#include <fstream>

#include "gano/errors.hpp"
#include "gano/rng.hpp"

namespace gano::cli {

json default_config() {
  return json::parse(R"({
  "seed": 0,
  "dataset": {
    "n_shapes": 200, "n_angles": 4, "grid": 64, "kappa": 7.0, "q_tilde": 1.0,
    "r0": [0.15, 0.35], "amp": [0.0, 0.01], "sensor_count": 100, "sensor_radius": 0.5
  },
  "stablesdf": {
    "latent_dim": 16, "hidden": [64, 64, 64], "sigma": 0.01, "lambda": 1e-4,
    "lr": 1e-3, "latent_lr": 1e-3, "lr_floor": 0.05, "epochs": 200,
    "shapes_per_batch": 4, "points_per_shape": 64, "samples_per_shape": 2048,
    "near_fraction": 0.7, "band": 0.05, "eval_shapes": 20, "eval_grid": 128
  },
  "latent_fit": { "samples": 1024, "steps": 300, "lr": 1e-2, "lambda": 1e-4 },
  "surrogate": {
    "task": "helmholtz", "slices": 8, "width": 32, "blocks": 2, "heads": 4, "ffn_mult": 2,
    "eps_slice": 1e-8, "inject_every_block": true, "lr": 2e-3, "lr_floor": 0.02,
    "epochs": 60, "batch": 4, "grid_queries": 128, "surface_points": 64
  },
  "flow": {
    "u_inf": 0.1, "alpha_deg": 4.0, "rho": 1.0, "cd_base": 0.01, "cd_roughness": 0.02,
    "camber_gain": 2.0, "wake_ramp": 0.2
  },
  "cv": { "box": [-1.0, 2.0, -1.0, 1.0], "samples_per_side": 64, "q_inf": 0.005, "chord": 1.0 },
  "invert": {
    "target": 0, "z_init": "zero", "steps": 150, "lr": 2e-2, "lambda_reg": 0.001,
    "samples": 256, "reproject_iters": 5, "eps_proj": 1e-8, "contour_grid": 128,
    "record_geometry": false, "chamfer_points": 256
  },
  "optimize": {
    "source": 0, "target": 1, "constraint": "front", "constraint_points": 16,
    "steps": 50, "lr": 5e-3, "lambda_reg": 0.001, "samples": 256, "reproject_iters": 5,
    "eps_proj": 1e-8, "contour_grid": 128, "record_geometry": true, "project_update": true,
    "surface_tol": 1e-6, "max_backtracks": 8
  },
  "optimize_cv": {
    "source": 0, "steps": 50, "lr": 1e-2, "lambda_reg": 0.001, "lambda_cd": 100.0,
    "cd_max": 0.02, "squared_hinge": true, "samples": 256, "reproject_iters": 5,
    "eps_proj": 1e-8, "contour_grid": 128, "record_geometry": true
  },
  "verify": {
    "shapes": 5, "points": 1000, "noise": 0.02, "drift_steps": [0.08, 0.04, 0.02, 0.01],
    "drift_points": 8, "denoise_samples": 100, "n_mc": 100000, "sensitivity_samples": 1000,
    "grad_latents": 10, "grad_samples": 64, "lipschitz_steps": 50
  }
})");
}

void overlay(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ValidationError("config" + where + ": expected an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where + "." + key;
    if (!base.contains(key)) throw ValidationError("config: unknown key " + path.substr(1));
    json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, path);
    } else if (slot.is_number() && value.is_number()) {
      if (slot.is_number_integer() && !value.is_number_integer())
        throw ValidationError("config: " + path.substr(1) + " must be an integer");
      slot = value;
    } else if (slot.type() != value.type()) {
      throw ValidationError("config: " + path.substr(1) + " has the wrong type");
    } else {
      slot = value;
    }
  }
}

json resolve_config(const std::filesystem::path& path, const std::optional<std::uint64_t>& seed) {
  json cfg = default_config();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot read " + path.string());
    json patch;
    try {
      patch = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
      throw ValidationError("config: " + path.string() + ": " + e.what());
    }
    overlay(cfg, patch);
  }
  if (seed) cfg["seed"] = *seed;
  return cfg;
}

std::string config_hash(const json& cfg) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : cfg.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

helm::DatasetConfig dataset_config(const json& cfg) {
  const json& d = cfg.at("dataset");
  helm::DatasetConfig c;
  c.n_shapes = d.at("n_shapes");
  c.n_angles = d.at("n_angles");
  c.scatter.n = d.at("grid");
  c.scatter.kappa = d.at("kappa");
  c.scatter.q_tilde = d.at("q_tilde");
  c.r0 = {d.at("r0").at(0), d.at("r0").at(1)};
  c.amp = {d.at("amp").at(0), d.at("amp").at(1)};
  c.sensor_count = d.at("sensor_count");
  c.sensor_radius = d.at("sensor_radius");
  c.seed = cfg.at("seed");
  return c;
}

sdf::SdfTrainConfig sdf_train_config(const json& cfg) {
  const json& s = cfg.at("stablesdf");
  sdf::SdfTrainConfig c;
  c.sigma = s.at("sigma");
  c.lambda = s.at("lambda");
  c.lr = s.at("lr");
  c.latent_lr = s.at("latent_lr");
  c.lr_floor = s.at("lr_floor");
  c.epochs = s.at("epochs");
  c.shapes_per_batch = s.at("shapes_per_batch");
  c.points_per_shape = s.at("points_per_shape");
  c.samples_per_shape = s.at("samples_per_shape");
  c.near_fraction = s.at("near_fraction");
  c.band = s.at("band");
  c.seed = derive_seed(cfg.at("seed"), "stablesdf");
  return c;
}

sdf::DecoderConfig decoder_config(const json& cfg) {
  const json& s = cfg.at("stablesdf");
  return sdf::DecoderConfig{s.at("latent_dim"), s.at("hidden").get<std::vector<std::size_t>>()};
}

surrogate::SurrogateConfig surrogate_config(const json& cfg, const std::string& task) {
  const json& s = cfg.at("surrogate");
  surrogate::SurrogateConfig c;
  c.in_dim = task == "flow" ? 2 : 4;
  c.out_dim = task == "flow" ? 3 : 2;
  c.slices = s.at("slices");
  c.width = s.at("width");
  c.blocks = s.at("blocks");
  c.heads = s.at("heads");
  c.ffn_mult = s.at("ffn_mult");
  c.eps_slice = s.at("eps_slice");
  c.inject_every_block = s.at("inject_every_block");
  c.latent_dim = cfg.at("stablesdf").at("latent_dim");
  c.validate();
  return c;
}

surrogate::SurrogateTrainConfig surrogate_train_config(const json& cfg) {
  const json& s = cfg.at("surrogate");
  surrogate::SurrogateTrainConfig c;
  c.lr = s.at("lr");
  c.lr_floor = s.at("lr_floor");
  c.epochs = s.at("epochs");
  c.batch = s.at("batch");
  c.seed = derive_seed(cfg.at("seed"), "surrogate/train");
  return c;
}

pipeline::LatentFitConfig latent_fit_config(const json& cfg) {
  const json& f = cfg.at("latent_fit");
  pipeline::LatentFitConfig c;
  c.samples = f.at("samples");
  c.steps = f.at("steps");
  c.lr = f.at("lr");
  c.lambda = f.at("lambda");
  c.seed = derive_seed(cfg.at("seed"), "latent_fit");
  return c;
}

opt::OptRunConfig run_config(const json& cfg, const std::string& section) {
  const json& s = cfg.at(section);
  opt::OptRunConfig c;
  c.steps = s.at("steps");
  c.lr = s.at("lr");
  c.lambda_reg = s.at("lambda_reg");
  c.samples = s.at("samples");
  c.reproject_iters = s.at("reproject_iters");
  c.eps_proj = s.at("eps_proj");
  c.contour_grid = s.at("contour_grid");
  c.record_geometry = s.at("record_geometry");
  if (s.contains("project_update")) c.project_update = s.at("project_update");
  if (s.contains("surface_tol")) c.surface_tol = s.at("surface_tol");
  if (s.contains("max_backtracks")) c.max_backtracks = s.at("max_backtracks");
  if (s.contains("lambda_cd")) c.lambda_cd = s.at("lambda_cd");
  if (s.contains("cd_max")) c.cd_max = s.at("cd_max");
  if (s.contains("squared_hinge")) c.squared_hinge = s.at("squared_hinge");
  c.seed = derive_seed(cfg.at("seed"), section);
  return c;
}

flow::FlowParams flow_params(const json& cfg) {
  const json& f = cfg.at("flow");
  flow::FlowParams p;
  p.u_inf = f.at("u_inf");
  p.alpha_deg = f.at("alpha_deg");
  p.rho = f.at("rho");
  p.cd_base = f.at("cd_base");
  p.cd_roughness = f.at("cd_roughness");
  p.camber_gain = f.at("camber_gain");
  p.wake_ramp = f.at("wake_ramp");
  return p;
}

forces::CvSpec cv_spec(const json& cfg) {
  const json& c = cfg.at("cv");
  forces::CvSpec cv;
  cv.box = {c.at("box").at(0), c.at("box").at(1), c.at("box").at(2), c.at("box").at(3)};
  cv.samples_per_side = c.at("samples_per_side");
  cv.q_inf = c.at("q_inf");
  cv.chord = c.at("chord");
  cv.rho = cfg.at("flow").at("rho");
  cv.alpha_deg = cfg.at("flow").at("alpha_deg");
  cv.validate();
  return cv;
}

}  // namespace gano::cli
