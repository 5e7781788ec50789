#include <iostream>

#include "t2iaudit/cli.hpp"

int main(int argc, char** argv) { return t2iaudit::run_cli(argc, argv, std::cout, std::cerr); }
