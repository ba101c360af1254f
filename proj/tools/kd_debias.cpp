#include <string>
#include <vector>

#include "kdd/cli.hpp"

int main(int argc, char** argv) {
  return kdd::run_command(std::vector<std::string>(argv + 1, argv + argc));
}
