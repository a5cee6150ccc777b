#include <iostream>

#include "hieratt/cli.hpp"

int main(int argc, char** argv) { return hieratt::run_cli(argc, argv, std::cout, std::cerr); }
