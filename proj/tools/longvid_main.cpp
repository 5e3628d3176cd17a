#include <csignal>
#include <iostream>
#include <string>
#include <vector>

#include "longvid/cli.hpp"
#include "longvid/util.hpp"

namespace {

void handle_signal(int) { longvid::set_interrupted(true); }

}  // namespace

int main(int argc, char** argv) {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  std::vector<std::string> args(argv + 1, argv + argc);
  return longvid::cmd_dispatch(args, std::cout, std::cerr);
}
