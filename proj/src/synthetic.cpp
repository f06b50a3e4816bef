#include "chromacodec/synthetic.hpp"

#include <random>

#include "chromacodec/errors.hpp"

namespace chromacodec {

namespace {

struct Rect {
  int x, y, w, h, vx, vy;
  Ycc color;
};

}  // namespace

std::vector<Frame> moving_rectangles(const SyntheticConfig& config) {
  if (config.width < 16 || config.height < 16) throw ConfigError("synthetic frames need at least 16x16");
  std::mt19937_64 rng(config.seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  const int W = static_cast<int>(config.width), H = static_cast<int>(config.height);

  // Saturated hues with well separated luma so that color is predictable from brightness.
  static const std::uint8_t palette[][3] = {{220, 40, 40},  {40, 200, 60},  {50, 70, 230},
                                            {240, 220, 40}, {200, 60, 220}, {40, 210, 220}};
  std::vector<Rect> rects;
  for (std::size_t i = 0; i < config.rectangles; ++i) {
    Rect r;
    r.w = pick(W / 5, W / 3);
    r.h = pick(H / 5, H / 3);
    r.x = pick(0, W - r.w);
    r.y = pick(0, H - r.h);
    do {
      r.vx = pick(-3, 3);
      r.vy = pick(-3, 3);
    } while (r.vx == 0 && r.vy == 0);
    const auto& c = palette[(i + static_cast<std::size_t>(pick(0, 5))) % 6];
    r.color = rgb_to_ycbcr(c[0], c[1], c[2]);
    rects.push_back(r);
  }

  std::vector<Frame> out;
  for (std::size_t f = 0; f < config.frames; ++f) {
    Frame frame;
    frame.mode = SubsamplingMode::k444;
    frame.y = Plane(config.width, config.height, 110);
    frame.cb = Plane(config.width, config.height, 128);
    frame.cr = Plane(config.width, config.height, 128);
    for (const Rect& r : rects) {
      for (int yy = r.y; yy < r.y + r.h; ++yy)
        for (int xx = r.x; xx < r.x + r.w; ++xx) {
          frame.y.at(xx, yy) = r.color.y;
          frame.cb->at(xx, yy) = r.color.cb;
          frame.cr->at(xx, yy) = r.color.cr;
        }
    }
    out.push_back(std::move(frame));
    for (Rect& r : rects) {
      if (r.x + r.vx < 0 || r.x + r.w + r.vx > W) r.vx = -r.vx;
      if (r.y + r.vy < 0 || r.y + r.h + r.vy > H) r.vy = -r.vy;
      r.x += r.vx;
      r.y += r.vy;
    }
  }
  return out;
}

}  // namespace chromacodec
