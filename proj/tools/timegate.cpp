#include "timegate/cli.hpp"

int main(int argc, char** argv) { return timegate::cli::run_cli(argc, argv); }
