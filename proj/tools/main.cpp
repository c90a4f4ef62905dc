#include <iostream>

#include "ramp/cli.hpp"

int main(int argc, char** argv) { return ramp::cli::run(argc, argv, std::cout, std::cerr); }
