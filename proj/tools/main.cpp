#include "mixborrow/cli.hpp"

int main(int argc, char** argv) { return mixborrow::run_cli(argc, argv); }
