#include <string>
#include <vector>

#include "rawvoice/cli.hpp"
#include "rawvoice/runtime.hpp"

int main(int argc, char** argv) {
  rawvoice::tune_allocator();
  std::vector<std::string> args(argv + 1, argv + argc);
  return rawvoice::cli::run_command(std::move(args));
}
