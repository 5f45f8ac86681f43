#include <iostream>

#include "mixsup/cli.hpp"

int main(int argc, char** argv) { return mixsup::run_cli(argc, argv, std::cout, std::cerr); }
