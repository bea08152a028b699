#include <iostream>

#include "sparsema/cli/commands.hpp"

int main(int argc, char** argv) {
  return sparsema::cli::run_cli(argc, argv, std::cout, std::cerr);
}
