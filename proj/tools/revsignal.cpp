#include <iostream>

#include "revsignal/cli.hpp"

int main(int argc, char** argv) { return revsignal::cli::run(argc, argv, std::cout, std::cerr); }
