#include <string>
#include <vector>

#include "semiprune/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return semiprune::run_cli(args);
}
