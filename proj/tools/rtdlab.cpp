#include <iostream>

#include "rtd/cli/cli.hpp"

int main(int argc, char** argv) { return rtd::cli::run(argc, argv, std::cout, std::cerr); }
