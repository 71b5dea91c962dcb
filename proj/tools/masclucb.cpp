#include <iostream>

#include "masclucb/cli.hpp"

int main(int argc, char** argv) { return masclucb::cli_entry(argc, argv, std::cout, std::cerr); }
