#include <iostream>

#include "dagtf/cli.hpp"

int main(int argc, char** argv) {
  return dagtf::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
