#include "mvr/cli.hpp"

int main(int argc, char** argv) { return mvr::cli_main(argc, argv); }
