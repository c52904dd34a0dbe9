#include "cli.hpp"

int main(int argc, char** argv) { return pnc::cli::run_cli(argc, argv); }
