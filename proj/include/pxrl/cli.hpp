#pragma once

namespace pxrl {

// Entry point behind the pxrl binary; exposed so tests can drive the CLI
// in-process. Exit codes: 0 success, 2 config error, 3 I/O error,
// 4 numeric abort.
int cli_main(int argc, const char* const* argv);

}  // namespace pxrl
