#include "visdial/cli.hpp"

int main(int argc, char** argv) { return visdial::run_cli(argc, argv); }
