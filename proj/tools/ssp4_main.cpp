#include "ssp4/cli.hpp"

int main(int argc, char** argv) { return ssp4::cli_main(argc, argv); }
