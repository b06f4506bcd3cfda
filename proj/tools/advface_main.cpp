#include <iostream>

#include "advface/cli.hpp"

int main(int argc, char** argv) {
  return advface::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
