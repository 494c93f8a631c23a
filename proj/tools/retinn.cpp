#include "retinn/cli.hpp"

int main(int argc, char** argv) { return retinn::run_cli(argc, argv); }
