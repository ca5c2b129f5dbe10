#include "pxrl/cli.hpp"

int main(int argc, char** argv) { return pxrl::cli_main(argc, argv); }
