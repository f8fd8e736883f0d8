// command line entry point; subcommands are implemented in cli_impl.hpp
#include "cli_impl.hpp"

int main(int argc, char** argv) { return cica::cli::run(argc, argv); }
