#include "s2rf/cli.hpp"

int main(int argc, char** argv) { return s2rf::run_cli(argc, argv); }
