#include <iostream>
#include <string>
#include <vector>

#include "tapermode/io/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tapermode::io::run_cli(args, std::cout, std::cerr);
}
