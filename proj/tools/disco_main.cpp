#include <iostream>
#include <string>
#include <vector>

#include "disco/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return disco::cli::run(args, std::cout, std::cerr);
}
