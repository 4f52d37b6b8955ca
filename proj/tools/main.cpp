#include <iostream>
#include <string>
#include <vector>

#include "dsi/cli.hpp"

int main(int argc, char** argv) {
    return dsi::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
