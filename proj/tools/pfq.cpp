#include "pfq/cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return pfq::cli::run(argc, argv, std::cout, std::cerr); }
