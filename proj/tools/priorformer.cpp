#include <iostream>

#include "priorformer/cli.hpp"

int main(int argc, char** argv) { return priorformer::cli::run(argc, argv, std::cout, std::cerr); }
