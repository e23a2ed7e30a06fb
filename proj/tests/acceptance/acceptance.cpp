// Acceptance suite: one line per criterion. Placeholder, filled in below.
#include <iostream>

int main() {
    std::cout << "acceptance suite not yet implemented\n";
    return 1;
}
