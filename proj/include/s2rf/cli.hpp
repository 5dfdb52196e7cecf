#pragma once

#include <iostream>
#include <string>
#include <vector>

namespace s2rf {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

/// Entry point of the `s2rf` tool. Subcommands: train, stylize, render, filter-masks, psnr, synth.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);
int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace s2rf
