#include <iostream>
#include <string>
#include <vector>

#include "implicit_motion/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return implicit_motion::run_cli(args, std::cout, std::cerr);
}
