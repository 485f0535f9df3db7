#pragma once

namespace stc::cli {

// Entry point behind the `stc` binary. Exit codes: 0 success, 1 config
// error, 2 data error, 3 backends unreachable.
int run_main(int argc, const char* const* argv);

}  // namespace stc::cli
