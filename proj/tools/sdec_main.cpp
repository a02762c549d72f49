#include <vector>

#include "sdec/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return sdec::run_command(args);
}
