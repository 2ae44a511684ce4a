#include <string>
#include <vector>

#include "heatcast/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return heatcast::cli::run(args);
}
