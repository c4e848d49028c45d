#include "commands.hpp"

int main(int argc, char** argv) { return demoe::cli::run(argc, argv); }
