#include <iostream>

#include "protoncast/cli.hpp"

int main(int argc, char** argv) {
  return protoncast::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
