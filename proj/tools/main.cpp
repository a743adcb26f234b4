#include "glyco/cli.hpp"

int main(int argc, char** argv) { return glyco::cli(argc, argv); }
