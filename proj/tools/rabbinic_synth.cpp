#include <iostream>

#include "rabbinic/cli.hpp"

int main(int argc, char** argv) { return rabbinic::cli::run_synth(argc, argv, std::cout, std::cerr); }
