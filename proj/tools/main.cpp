#include "cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return stackprice::cli::dispatch(argc, argv, std::cout, std::cerr); }
