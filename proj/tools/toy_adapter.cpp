// Serves a toy backend over the adapter protocol; used by the adapter
// conformance tests and as a reference for wrapping real models.

#include <cstdio>
#include <iostream>

#include "promptinv/adapter.hpp"
#include "promptinv/backend.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: toy_adapter BACKEND_MANIFEST_JSON\n";
    return 2;
  }
  try {
    auto manifest = promptinv::BackendManifest::load(argv[1]);
    manifest.type = "toy";  // serve the toy model regardless of manifest type
    auto backend = promptinv::open_backend(manifest);
    return promptinv::serve_adapter(*backend, stdin, stdout);
  } catch (const std::exception& e) {
    std::cerr << "toy_adapter: " << e.what() << '\n';
    return 2;
  }
}
