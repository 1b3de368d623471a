// Command-line front end: config loading, subcommand dispatch and CSV/JSON
// output. Exit codes: 0 success, 1 validation error, 2 numerical failure.
#pragma once

#include <string>
#include <vector>

namespace vstop {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitNumerical = 2;

int dispatch(int argc, char** argv);
// Same, with args[0] the first subcommand token (no program name).
int dispatch(const std::vector<std::string>& args);

}  // namespace vstop
