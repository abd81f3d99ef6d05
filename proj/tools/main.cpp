#include <iostream>

#include "growlab/cli/cli.hpp"

int main(int argc, char** argv) { return growlab::cli::run(argc, argv, std::cout, std::cerr); }
