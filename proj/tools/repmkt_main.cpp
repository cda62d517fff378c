#include "repmkt/cli.hpp"

int main(int argc, char** argv) { return repmkt::dispatch(argc, argv); }
