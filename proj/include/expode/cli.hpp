#pragma once

namespace expode {

/// Command line entry point (run / info / convergence).
/// Returns 0 on success, 2 on validation errors, 3 on integration failures.
int cli_main(int argc, const char* const* argv);

} // namespace expode
