#include <iostream>

#include "qag/cli.hpp"

int main(int argc, char** argv) {
  return qag::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
