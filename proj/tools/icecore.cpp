#include <iostream>

#include "icecore/cli.hpp"

int main(int argc, char** argv) { return icecore::cli::run(argc, argv, std::cout, std::cerr); }
