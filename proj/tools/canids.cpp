#include "canids/cli.hpp"

int main(int argc, char** argv) {
  canids::cli::Cli cli;
  return cli.run(argc, argv);
}
