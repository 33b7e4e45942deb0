#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "grpolab/svgplot.hpp"

using namespace grpolab;

TEST_CASE("line plots render self-contained SVG with a legend") {
  const std::vector<PlotSeries> series{
      PlotSeries{"alpha", {0, 1, 2, 3}, {0.1, 0.4, 0.2, 0.8}},
      PlotSeries{"beta", {0, 1, 2, 3}, {0.9, 0.5, 0.3, 0.1}}};
  const std::string svg =
      render_line_plot("Demo plot", "step", "value", series);
  CHECK(svg.find("<svg") != std::string::npos);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("Demo plot") != std::string::npos);
  CHECK(svg.find("alpha") != std::string::npos);
  CHECK(svg.find("beta") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
  CHECK(svg.find("<script") == std::string::npos);
  CHECK(svg.find("href=") == std::string::npos);  // no external references
}

TEST_CASE("degenerate series still produce a valid document") {
  const std::string empty = render_line_plot("Empty", "x", "y", {});
  CHECK(empty.find("<svg") != std::string::npos);
  CHECK(empty.find("</svg>") != std::string::npos);

  const std::vector<PlotSeries> flat{PlotSeries{"flat", {1, 2}, {0.5, 0.5}}};
  const std::string svg = render_line_plot("Flat", "x", "y", flat);
  CHECK(svg.find("polyline") != std::string::npos);

  const std::vector<PlotSeries> gappy{
      PlotSeries{"gappy", {0, 1, 2}, {0.5, std::nan(""), 0.7}}};
  CHECK(render_line_plot("Gappy", "x", "y", gappy).find("</svg>") !=
        std::string::npos);
}

TEST_CASE("plots write to disk") {
  const auto path =
      std::filesystem::temp_directory_path() / "grpolab_plot_test.svg";
  write_line_plot(path.string(), "File plot", "x", "y",
                  {PlotSeries{"s", {0, 1}, {0, 1}}});
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  CHECK(buf.str().find("</svg>") != std::string::npos);
  std::filesystem::remove(path);
}
