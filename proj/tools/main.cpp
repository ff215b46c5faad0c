#include <iostream>
#include <string>
#include <vector>

#include "crossworld/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return crossworld::cli_main(args, std::cout, std::cerr);
}
