#include "pbg2p/cli.hpp"

int main(int argc, char** argv) { return pbg2p::run(argc, argv); }
