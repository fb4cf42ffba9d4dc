// Command-line runner for config-driven experiments.
//
//   robinspec_cli run --config <path> [--output-dir <path>] [--seed <u64>]
//
// Exit codes: 0 success, 1 scenario failure, 2 configuration error.

#include "robinspec/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Boundary spectral data laboratory"};
  app.require_subcommand(1);

  std::string config;
  std::string output_dir;
  std::uint64_t seed = 0;
  CLI::App* run = app.add_subcommand("run", "Run the experiment described by a JSON config");
  run->add_option("--config", config, "Experiment config (JSON)")->required();
  CLI::Option* out_opt = run->add_option("--output-dir", output_dir, "Override output_dir");
  CLI::Option* seed_opt = run->add_option("--seed", seed, "Override the 64-bit seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  std::optional<std::filesystem::path> out;
  if (*out_opt) out = output_dir;
  std::optional<std::uint64_t> s;
  if (*seed_opt) s = seed;
  return robinspec::run_command(config, out, s, std::cerr);
}
