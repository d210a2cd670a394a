#include "pblame/cli.h"

int main(int argc, char** argv) { return pblame::run_cli(argc, argv); }
