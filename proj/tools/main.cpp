#include <iostream>

#include "pointmatch/cli.hpp"

int main(int argc, char **argv) { return pointmatch::run_cli(argc, argv, std::cout, std::cerr); }
