#include <iostream>

#include "bsp/cli.hpp"

int main(int argc, char** argv) { return bsp::run_cli(argc, argv, std::cout, std::cerr); }
