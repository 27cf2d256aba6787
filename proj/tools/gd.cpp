#include <iostream>
#include <string>
#include <vector>

#include "guidedepth/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return guidedepth::run_cli(args, std::cout, std::cerr);
}
