#include <iostream>

#include "hqa/cli.hpp"

int main(int argc, char** argv) { return hqa::cli::run(argc, argv, std::cout, std::cerr); }
