#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "gano/errors.hpp"

using namespace gano;

namespace {

struct Spec {
  const char* name;
  const char* help;
  const char* out;
  std::function<int(const cli::Context&)> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gano: geometry-aware neural operator pipeline"};
  app.require_subcommand(1);

  const std::vector<Spec> specs{
      {"gen-data", "Generate the scattering dataset", "data", cli::cmd_gen_data},
      {"train-sdf", "Train the stabilized SDF decoder and latent table", "sdf", cli::cmd_train_sdf},
      {"train-surrogate", "Train the latent-conditioned field surrogate", "surrogate", cli::cmd_train_surrogate},
      {"invert", "Recover a held-out shape from sensor observations", "invert", cli::cmd_invert},
      {"optimize", "Field-objective shape optimization with constraint projection", "optimize", cli::cmd_optimize},
      {"optimize-cv", "Control-volume lift/drag optimization", "optimize_cv", cli::cmd_optimize_cv},
      {"verify", "Check the stability properties on trained models", "verify", cli::cmd_verify},
      {"eval", "Held-out reconstruction and surrogate metrics", "eval", cli::cmd_eval},
  };

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out, data = "data", sdf = "sdf", sdf_baseline, surrogate = "surrogate";
  bool force = false, resume = false, print_config = false;
  std::size_t jobs = 1;
  std::map<const CLI::App*, const Spec*> by_app;
  for (const auto& s : specs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "JSON config overriding defaults")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Root seed (overrides the config)");
    sub->add_option("--out", out, std::string("Output directory (default ") + s.out + ")");
    sub->add_flag("--force", force, "Clear a non-empty output directory");
    sub->add_option("--jobs", jobs, "Worker threads across independent units")->check(CLI::PositiveNumber);
    sub->add_flag("--print-config", print_config, "Print the resolved config and exit");
    const std::string name = s.name;
    if (name != "gen-data") sub->add_option("--data", data, "Dataset directory")->capture_default_str();
    if (name != "gen-data" && name != "train-sdf") sub->add_option("--sdf", sdf, "train-sdf output directory")->capture_default_str();
    if (name == "invert" || name == "optimize" || name == "optimize-cv" || name == "verify" || name == "eval")
      sub->add_option("--surrogate", surrogate, "train-surrogate output directory")->capture_default_str();
    if (name == "train-sdf" || name == "train-surrogate")
      sub->add_flag("--resume", resume, "Continue from the checkpoint in the output directory");
    if (name == "verify") sub->add_option("--sdf-baseline", sdf_baseline, "sigma = 0 train-sdf output for comparison");
    by_app[sub] = &s;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  const Spec* spec = nullptr;
  for (const auto* sub : app.get_subcommands()) spec = by_app.at(sub);
  try {
    cli::Context ctx;
    ctx.cfg = cli::resolve_config(config_path, seed);
    if (print_config) {
      std::printf("%s\n", ctx.cfg.dump(2).c_str());
      return 0;
    }
    ctx.out = out.empty() ? spec->out : out;
    ctx.data = data;
    ctx.sdf = sdf;
    ctx.sdf_baseline = sdf_baseline;
    ctx.surrogate = surrogate;
    ctx.force = force;
    ctx.resume = resume;
    ctx.jobs = jobs;
    return spec->run(ctx);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical abort: %s\n", e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
