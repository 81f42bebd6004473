#include <iostream>

#include "dcfae/cli.hpp"

int main(int argc, char** argv) { return dcfae::cli::run(argc, argv, std::cout, std::cerr); }
