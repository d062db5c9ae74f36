#include "daevi/cli.hpp"

int main(int argc, char** argv) {
    return daevi::run_cli(argc, argv);
}
