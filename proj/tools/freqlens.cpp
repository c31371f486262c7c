#include "freqlens/cli.hpp"

int main(int argc, char** argv) { return freqlens::cli::run(argc, argv); }
