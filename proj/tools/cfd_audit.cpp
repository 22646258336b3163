#include <string>
#include <vector>

#include "cfd/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cfd::cli::run(args);
}
