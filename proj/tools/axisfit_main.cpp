#include "axisfit/cli.hpp"

int main(int argc, char** argv) { return axisfit::cli_main(argc, argv); }
