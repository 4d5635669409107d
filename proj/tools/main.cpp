#include "imbk/cli.hpp"

int main(int argc, char** argv) { return imbk::run_cli(argc, argv); }
