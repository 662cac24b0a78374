#include <cstdio>

int main() {
    std::puts("oblate: command line not wired up yet");
    return 0;
}
