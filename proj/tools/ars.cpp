#include <string>
#include <vector>

#include "ars/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return ars::run(args);
}
