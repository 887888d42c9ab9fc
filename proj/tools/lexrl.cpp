#include "lexrl/cli.hpp"

int main(int argc, char** argv) { return lexrl::run_cli(argc, argv); }
