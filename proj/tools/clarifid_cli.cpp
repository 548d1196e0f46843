#include <iostream>

#include "clarifid/cli.hpp"

int main(int argc, char** argv) {
  return clarifid::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
