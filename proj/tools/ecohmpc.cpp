#include <iostream>

#include "ecohmpc/cli.hpp"

int main(int argc, char** argv) { return ecohmpc::cli_main(argc, argv, std::cout, std::cerr); }
