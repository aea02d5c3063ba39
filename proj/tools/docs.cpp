#include "docs/cli.hpp"

int main(int argc, char** argv) { return docs::cli::run_cli(argc, argv); }
