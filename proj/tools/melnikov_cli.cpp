#include "melnikov/cli.hpp"

int main(int argc, char** argv) { return melnikov::cli::main(argc, argv); }
