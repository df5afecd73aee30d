#include <iostream>

#include "bnpc/cli.hpp"

int main(int argc, char** argv) { return bnpc::cli::main(argc, argv, std::cout, std::cerr); }
