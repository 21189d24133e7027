#include "pricer/cli.hpp"

int main(int argc, char** argv) { return pricer::run_cli(argc, argv); }
