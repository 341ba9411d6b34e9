#include "stas/cli/cli.hpp"

int main(int argc, char** argv) { return stas::cli::run(argc, argv); }
