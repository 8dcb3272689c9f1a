#include "unicd/cli.hpp"

int main(int argc, char** argv) { return unicd::cli_main(argc, argv); }
