#include <iostream>

#include "hloc/cli/app.hpp"

int main(int argc, char** argv) {
  return hloc::cli::run_cli(argc, argv, std::cout, std::cerr);
}
