#include "signmap/cli/app.hpp"

int main(int argc, char** argv) { return signmap::cli::run(argc, argv); }
