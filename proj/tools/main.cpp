#include "metatriage/cli.hpp"

int main(int argc, char** argv) { return metatriage::dispatch(argc, argv); }
