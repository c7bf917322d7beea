#include "fasw/cli.hpp"

int main(int argc, char** argv) { return fasw::run_cli(argc, argv); }
