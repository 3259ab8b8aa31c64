#include <iostream>

int main() {
  std::cout << "lowmt: placeholder\n";
  return 0;
}
