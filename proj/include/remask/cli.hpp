#pragma once

#include <map>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace remask {

/// `key = value` lines; blank lines and lines starting with `#` are skipped.
/// Throws ParseError naming the offending line.
std::map<std::string, std::string> parse_config_text(std::string_view text);

/// Runs one subcommand (train-denoiser, train-classifier, generate, score,
/// evaluate, ablate). `args` excludes the program name. Returns 0 on
/// success, 1 on a usage or configuration error, 2 on a runtime failure.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace remask
