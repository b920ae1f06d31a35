// Command-line front end (subcommands are wired up in cli.hpp).
#include "mdam/cli.hpp"

int main(int argc, char** argv) { return mdam::cli_main(argc, argv); }
