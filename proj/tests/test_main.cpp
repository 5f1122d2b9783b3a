#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "coifnet/alloc.hpp"

int main(int argc, char** argv) {
    coifnet::tune_allocator();
    doctest::Context ctx(argc, argv);
    return ctx.run();
}
