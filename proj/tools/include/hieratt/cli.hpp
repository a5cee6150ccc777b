#pragma once

#include <iosfwd>

namespace hieratt {

/// Entry point of the `hieratt` tool. Results go to `out`, diagnostics and
/// usage text to `err`. Files under --out are written only when the command
/// succeeds.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hieratt
