// placeholder; the CLI is assembled after the library modules
#include <cstdio>

int main() {
    std::puts("h2: not yet wired");
    return 0;
}
