#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return coherency::run_cli(argc, argv, std::cout, std::cerr); }
