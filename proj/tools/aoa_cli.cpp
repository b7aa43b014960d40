#include "aoa/cli.hpp"

int main(int argc, char** argv) { return aoa::cli::run(argc, argv); }
