#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace vxp {

/// Entry point of the `vxp` tool. Returns 0 on success, 1 on a runtime
/// failure and 2 on a usage error (nothing is written in that case).
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int cli_main(int argc, const char* const* argv);

/// Minimal SVG line chart of a recall@K curve with labelled axes.
std::string render_recall_svg(const std::vector<std::pair<double, double>>& curve);

}  // namespace vxp
