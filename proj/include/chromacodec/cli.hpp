#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chromacodec {

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumeric = 4;

// args excludes the program name. Subcommands: synth, train, encode, decode,
// eval, rd-report. The resolved configuration of every run is logged to err
// as one JSON line.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chromacodec
