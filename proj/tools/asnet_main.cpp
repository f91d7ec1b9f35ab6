#include <string>
#include <vector>

#include "asnet/cli.hpp"

int main(int argc, char** argv) {
  return asnet::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
