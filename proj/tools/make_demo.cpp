// Writes the mock demo workspace used in the README walkthrough.

#include <iostream>

#include "demo_workspace.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: qag_make_demo DIR\n";
    return 2;
  }
  const auto ws = test_support::write_demo_workspace(argv[1]);
  std::cout << "wrote " << ws.gold.size() << " contexts with " << ws.gold.pair_count()
            << " gold pairs to " << argv[1] << "\n";
  return 0;
}
