#include <iostream>

#include "gapfill/cli.hpp"

int main(int argc, char** argv) {
  return gapfill::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
