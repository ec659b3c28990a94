#include <iostream>

#include "nmfsem/cli.hpp"

int main(int argc, char** argv) { return nmfsem::cli::run(argc, argv, std::cout, std::cerr); }
