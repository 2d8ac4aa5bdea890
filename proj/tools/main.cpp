#include "mpail/cli.hpp"

int main(int argc, char** argv) {
  mpail::tune_allocator();
  return mpail::cli::run(argc, argv);
}
