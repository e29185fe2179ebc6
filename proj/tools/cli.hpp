#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dyntex/error.hpp"

namespace dyntex::cli {

enum ExitCode : int { ok = 0, usage = 2, io_error = 3, data_error = 4, numeric_error = 5 };

/// Flags resolved over the optional JSON config file. Unset optionals mean
/// "not given anywhere"; commands fill their own defaults.
struct RunConfig {
  std::string command;
  std::string frames;
  std::string stats;
  std::string net;
  std::string weights;
  std::optional<std::size_t> dt;
  std::vector<std::string> layers;
  std::vector<double> layer_weights;
  std::optional<std::size_t> n_frames;
  std::uint64_t seed = 0;
  std::size_t iters = 500;
  std::string init = "noise";
  std::string seed_frames;
  std::string out;
  std::string config;
  std::string dtype = "f32";
  std::string path;  // info's positional artifact
};

/// Exit status for an engine error: 3 for I/O, 5 for non-finite values,
/// 4 for every shape, format and consistency failure.
int exit_code(ErrorCode code) noexcept;

/// Runs one command. `args` excludes the program name. Human-readable
/// results go to `out`; the effective config echo, progress and errors go
/// to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dyntex::cli
