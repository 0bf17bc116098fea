#include <iostream>

#include "rabbinic/cli.hpp"

int main(int argc, char** argv) { return rabbinic::cli::run(argc, argv, std::cin, std::cout, std::cerr); }
