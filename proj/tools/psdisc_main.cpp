#include "psdisc/cli.hpp"

int main(int argc, char** argv) { return psdisc::cli_dispatch(argc, argv); }
