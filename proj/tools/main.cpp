#include <string>
#include <vector>

#include "multical/cli.hpp"

int main(int argc, char** argv) {
  return multical::run_cli(std::vector<std::string>(argv, argv + argc));
}
