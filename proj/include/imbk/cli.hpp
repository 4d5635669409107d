#pragma once

namespace imbk {

// Full command-line entry point. Returns the process exit code:
// 0 success, 2 bad configuration, 3 data error, 4 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace imbk
