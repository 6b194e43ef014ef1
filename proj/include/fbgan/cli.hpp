#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fbgan {

/// Runs one command line (args[0] is the program name). Returns 0 on
/// success, 1 on a categorized failure, 2 on a usage error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::vector<std::string> cli_subcommands();

/// Long flag names (with leading "--") a subcommand defines, excluding --help.
std::vector<std::string> cli_flags(const std::string& subcommand);

/// Raises the allocator's mmap and trim thresholds so the training loop's
/// large temporaries are recycled instead of returned to the kernel.
void tune_allocator();

}  // namespace fbgan
