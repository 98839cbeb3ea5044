#include <iostream>

#include "geocbr/cli.hpp"

int main(int argc, char** argv) {
    return geocbr::cli::run({argv, argv + argc}, std::cout, std::cerr);
}
