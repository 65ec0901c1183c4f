#include "expode/cli.hpp"

int main(int argc, char** argv) { return expode::cli_main(argc, argv); }
