#pragma once
// Command-line front end: gen, compile, run, bench, count, sample.

#include <iosfwd>
#include <string>
#include <vector>

namespace dagtf::cli {

enum ExitCode { kOk = 0, kUsage = 2, kValidation = 3, kRuntime = 4 };

// Output directory for artifacts whose path is not given: $DAGTF_OUT_DIR,
// else "dagtf_out".
std::string default_out_dir();

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dagtf::cli
