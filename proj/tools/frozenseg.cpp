#include <iostream>

#include "frozenseg/commands.hpp"

int main(int argc, char** argv) { return frozenseg::cli::run(argc, argv, std::cout, std::cerr); }
