#include "penetrance/cli.hpp"

int main(int argc, char** argv) { return penetrance::cli_main(argc, argv); }
