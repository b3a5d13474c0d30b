#include "grs/platform_io.hpp"

int main(int argc, char** argv) {
    return grs::io::cli_main(argc, argv);
}
