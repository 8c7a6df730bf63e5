#include "nesya/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nesya::cli::run(argc, argv, std::cout, std::cerr); }
