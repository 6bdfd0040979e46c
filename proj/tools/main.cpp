#include "pdecon/cli.hpp"

int main(int argc, char** argv) { return pdecon::run_cli(argc, argv); }
