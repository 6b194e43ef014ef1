#include "fbgan/cli.hpp"

#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  fbgan::tune_allocator();
  return fbgan::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
