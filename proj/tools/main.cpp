#include "slidebench/cli.hpp"

int main(int argc, char** argv) { return slidebench::run_cli(argc, argv); }
