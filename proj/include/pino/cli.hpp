#pragma once

// `pino` subcommands. Exit codes: 0 success, 1 usage, 2 data, 3 numerical.

namespace pino {

int run_cli(int argc, char** argv);

}  // namespace pino
