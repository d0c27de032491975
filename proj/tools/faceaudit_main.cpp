#include "faceaudit/cli.hpp"

int main(int argc, char** argv) { return faceaudit::cli::run(argc, argv); }
