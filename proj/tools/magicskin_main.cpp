#include "magicskin/cli.hpp"

int main(int argc, char** argv) { return magicskin::cli::run_cli(argc, argv); }
