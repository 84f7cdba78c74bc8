#pragma once

#include <string>
#include <vector>

namespace dgm {

/// Runs one command line (argv[0] excluded from semantics).
/// Returns 0 on success, 2 on usage errors, 1 on runtime failures.
int run_cli(int argc, const char* const* argv);

}  // namespace dgm
