#include "vstop/cli.hpp"

int main(int argc, char** argv) { return vstop::dispatch(argc, argv); }
