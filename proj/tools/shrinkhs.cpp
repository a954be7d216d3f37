#include "shrinkhs/cli.hpp"

int main(int argc, char** argv) { return shrinkhs::cli::main(argc, argv); }
