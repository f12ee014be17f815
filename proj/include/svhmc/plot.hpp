#pragma once

#include <span>
#include <string>

namespace svhmc::plot {

struct Canvas {
  int width = 900;
  int height = 320;
  int margin = 48;
};

/// Line trace of a return series, one polyline vertex per observation.
/// Throws std::invalid_argument on an empty series. `metadata` is embedded
/// verbatim (XML-escaped) in a <metadata> element when non-empty.
std::string returns_svg(std::span<const double> y, const std::string& title,
                        const std::string& metadata = {}, const Canvas& canvas = {});

/// Posterior volatility: shaded band between lower and upper, mean line, and
/// an optional reference path (empty span to omit).
std::string volatility_svg(std::span<const double> mean, std::span<const double> lower,
                           std::span<const double> upper, std::span<const double> reference,
                           const std::string& title, const std::string& metadata = {},
                           const Canvas& canvas = {});

std::string xml_escape(const std::string& text);

}  // namespace svhmc::plot
