#include <iostream>

#include "resofit/cli.hpp"

int main(int argc, char** argv) {
  return resofit::cli::run(argc, argv, {std::cout, std::cerr});
}
