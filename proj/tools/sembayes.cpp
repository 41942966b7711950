#include <iostream>

#include "sembayes/cli.hpp"

int main(int argc, char** argv) { return sembayes::cli_main(argc, argv, std::cout, std::cerr); }
