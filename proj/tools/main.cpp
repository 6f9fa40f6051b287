#include "cli.hpp"

#include <mtsk/common.hpp>

#include <iostream>

int main(int argc, char** argv) {
  mtsk::configure_logging();
  std::vector<std::string> args(argv + 1, argv + argc);
  return mtsk::cli::run(args, std::cout, std::cerr);
}
