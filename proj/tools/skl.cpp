#include "skl/cli.hpp"

int main(int argc, char** argv) { return skl::run_cli(argc, argv); }
