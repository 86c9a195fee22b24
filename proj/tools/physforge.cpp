#include "physforge/cli.hpp"

int main(int argc, char** argv) {
  return physforge::run_cli(argc, argv);
}
