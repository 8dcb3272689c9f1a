#pragma once

namespace unicd {

// Entry point for the `unicd` binary. Exit codes: 0 success, 2 bad
// config/usage/data, 3 I/O failure, 1 anything else (including gradcheck
// failures).
int cli_main(int argc, char** argv);

} // namespace unicd
