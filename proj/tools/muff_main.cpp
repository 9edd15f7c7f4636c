#include <iostream>
#include <string>
#include <vector>

#include "muff/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return muff::run_cli(args, std::cout, std::cerr);
}
