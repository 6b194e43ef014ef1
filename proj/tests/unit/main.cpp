#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "fbgan/cli.hpp"

int main(int argc, char** argv) {
  fbgan::tune_allocator();
  doctest::Context ctx;
  ctx.applyCommandLine(argc, argv);
  return ctx.run();
}
