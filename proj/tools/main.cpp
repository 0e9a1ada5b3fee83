#include <string>
#include <vector>

#include "fplab/cli.hpp"

int main(int argc, char** argv) {
    return fplab::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
