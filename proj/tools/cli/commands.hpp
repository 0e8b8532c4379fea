#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>

#include "cli/config.hpp"

namespace gano::cli {

/// Resolved invocation shared by every subcommand. Input paths are
/// directories written by earlier commands.
struct Context {
  json cfg;
  std::filesystem::path out;
  std::filesystem::path data = "data";
  std::filesystem::path sdf = "sdf";
  std::filesystem::path sdf_baseline;  // optional sigma = 0 decoder for verify
  std::filesystem::path surrogate = "surrogate";
  bool force = false;
  bool resume = false;
  std::size_t jobs = 1;
};

/// Each returns the process exit code; ValidationError and NumericalError
/// propagate to main.
int cmd_gen_data(const Context& ctx);
int cmd_train_sdf(const Context& ctx);
int cmd_train_surrogate(const Context& ctx);
int cmd_invert(const Context& ctx);
int cmd_optimize(const Context& ctx);
int cmd_optimize_cv(const Context& ctx);
int cmd_verify(const Context& ctx);
int cmd_eval(const Context& ctx);

}  // namespace gano::cli
