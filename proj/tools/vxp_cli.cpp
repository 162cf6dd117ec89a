#include "vxp/cli.hpp"

int main(int argc, char** argv) { return vxp::cli_main(argc, argv); }
