#include <iostream>

#include "rpbf_cli.hpp"

int main(int argc, char** argv) { return rpbf::cli::run_cli(argc, argv, std::cout, std::cerr); }
