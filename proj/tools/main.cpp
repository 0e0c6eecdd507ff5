#include "rtb/cli.hpp"

int main(int argc, char** argv) {
    return rtb::cli_main(argc, const_cast<const char* const*>(argv));
}
