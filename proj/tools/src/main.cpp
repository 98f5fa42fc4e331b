#include <iostream>

#include "kfp/cli/commands.hpp"

int main(int argc, char** argv) { return kfp::cli::cli_main(argc, argv, std::cout, std::cerr); }
