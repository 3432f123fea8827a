#include <malloc.h>

#include <string>
#include <vector>

#include "minkloc/cli/app.hpp"

int main(int argc, char** argv) {
  // Large feature matrices are allocated and freed every layer; keep them on the heap.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return minkloc::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
