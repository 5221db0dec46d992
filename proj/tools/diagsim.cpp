#include "diagsim/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return diagsim::run_cli(argc, argv, std::cin, std::cout, std::cerr);
}
