#include "keec/cli.hpp"

int main(int argc, char** argv) { return keec::cli_main(argc, argv); }
