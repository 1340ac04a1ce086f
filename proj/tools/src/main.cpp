#include "kao/cli.hpp"

int main(int argc, char** argv) { return kao::run_cli(argc, argv); }
