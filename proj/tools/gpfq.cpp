#include "gpfq/cli.hpp"

int main(int argc, char** argv) { return gpfq::run_cli(argc, argv); }
