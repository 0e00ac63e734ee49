#include "perspectra/cli.hpp"

int main(int argc, char** argv) { return perspectra::run(argc, argv); }
