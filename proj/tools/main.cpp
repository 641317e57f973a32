#include <iostream>
#include <string>
#include <vector>

#include "lcg/cli.hpp"

int main(int argc, char** argv) {
  return lcg::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
