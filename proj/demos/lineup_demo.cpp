// Builds one lineup from a heavy-tailed sample and writes it as SVG.
#include <cstdio>
#include <fstream>

#include "qqlineup/lineup.hpp"
#include "qqlineup/normality.hpp"
#include "qqlineup/svg.hpp"

int main(int argc, char** argv) {
  using namespace qqlineup;
  const char* path = argc > 1 ? argv[1] : "lineup.svg";

  SampleVector data = sample_t(RngStream{7, "demo/data"}, 50, 3.0);
  Lineup l = assemble_lineup(LineupSpec{.m = 20, .design = QQDesign::Standard, .data = data, .seed = 11});

  std::ofstream(path) << render_svg(l, default_layout(l.spec.m));
  const auto sw = sw_test(data);
  std::printf("%s: lineup %s, SW W=%.4f p=%.4g\n", path, l.id.c_str(), sw.statistic, sw.p_value);
  std::printf("data panel: %zu\n", l.data_position);
}
