#include <iostream>

#include "hedgelab/cli.hpp"

int main(int argc, char** argv) { return hedgelab::cli::run(argc, argv, std::cout, std::cerr); }
