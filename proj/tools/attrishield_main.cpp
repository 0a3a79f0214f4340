#include <iostream>

#include "attrishield/cli.hpp"

int main(int argc, char** argv) {
  return attrishield::cli::run_cli(argc, argv, std::cout, std::cerr);
}
