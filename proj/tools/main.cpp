#include <iostream>

#include "chromacodec/cli.hpp"

int main(int argc, char** argv) {
  return chromacodec::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
