#include <CLI11.hpp>

#include <iostream>

#include "vxp/docs.hpp"
#include "vxp/error.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Render or check the protocol and format docs"};
  std::string dir = "docs";
  bool check = false;
  app.add_option("dir", dir, "docs directory");
  app.add_flag("--check", check, "fail when the docs on disk differ from the rendering");
  CLI11_PARSE(app, argc, argv);
  try {
    if (check) {
      vxp::check_docs_in_sync(dir);
      std::cout << "docs in sync\n";
    } else {
      vxp::write_protocol_docs(dir);
      std::cout << "wrote " << dir << "/protocols.md and " << dir << "/formats.md\n";
    }
  } catch (const vxp::Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
