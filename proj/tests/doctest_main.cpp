#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "longvid/log.hpp"

int main(int argc, char** argv) {
  longvid::set_log_level(longvid::LogLevel::off);  // keep test output clean
  return doctest::Context(argc, argv).run();
}
