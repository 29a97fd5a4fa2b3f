#include <iostream>
#include <string>
#include <vector>

#include "calib/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return calib::run_cli(args, std::cout, std::cerr);
}
