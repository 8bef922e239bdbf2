#include <iostream>

#include "polcolor/cli.hpp"

int main(int argc, char** argv) { return polcolor::run_cli(argc, argv, std::cout, std::cerr); }
