#include "mvr/segment.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "mvr/random.hpp"

namespace mvr {

PixelMask::PixelMask(int x0, int y0, int width, int height)
    : x0_(x0), y0_(y0), width_(width), height_(height),
      bits_(static_cast<std::size_t>(std::max(0, width)) * static_cast<std::size_t>(std::max(0, height)), 0) {}

bool PixelMask::contains(int x, int y) const {
  const int lx = x - x0_, ly = y - y0_;
  if (lx < 0 || ly < 0 || lx >= width_ || ly >= height_) return false;
  return bits_[static_cast<std::size_t>(ly) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(lx)] != 0;
}

void PixelMask::set(int x, int y, bool on) {
  const int lx = x - x0_, ly = y - y0_;
  if (lx < 0 || ly < 0 || lx >= width_ || ly >= height_) return;
  bits_[static_cast<std::size_t>(ly) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(lx)] = on ? 1 : 0;
}

int PixelMask::count() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

PixelMask PixelMask::tight() const {
  int min_x = x0_ + width_, min_y = y0_ + height_, max_x = x0_ - 1, max_y = y0_ - 1;
  for (int y = y0_; y < y0_ + height_; ++y) {
    for (int x = x0_; x < x0_ + width_; ++x) {
      if (!contains(x, y)) continue;
      min_x = std::min(min_x, x);
      min_y = std::min(min_y, y);
      max_x = std::max(max_x, x);
      max_y = std::max(max_y, y);
    }
  }
  if (max_x < min_x) return {};
  PixelMask out(min_x, min_y, max_x - min_x + 1, max_y - min_y + 1);
  for (int y = min_y; y <= max_y; ++y) {
    for (int x = min_x; x <= max_x; ++x) out.set(x, y, contains(x, y));
  }
  return out;
}

PixelMask erode(const PixelMask& mask, int radius) {
  if (radius <= 0) return mask;
  PixelMask out(mask.x0(), mask.y0(), mask.width(), mask.height());
  for (int y = mask.y0(); y < mask.y0() + mask.height(); ++y) {
    for (int x = mask.x0(); x < mask.x0() + mask.width(); ++x) {
      bool keep = mask.contains(x, y);
      for (int dy = -radius; keep && dy <= radius; ++dy) {
        for (int dx = -radius; keep && dx <= radius; ++dx) keep = mask.contains(x + dx, y + dy);
      }
      out.set(x, y, keep);
    }
  }
  return out.tight();
}

std::vector<InstanceMask> segment(const Frame& frame, const SegmentNoise& noise) {
  struct Box {
    int min_x, min_y, max_x, max_y;
  };
  std::map<int, Box> boxes;
  for (const FeatureSample& s : frame.samples()) {
    const int x = s.pixel_x(), y = s.pixel_y();
    auto [it, inserted] = boxes.try_emplace(s.instance, Box{x, y, x, y});
    if (!inserted) {
      Box& b = it->second;
      b.min_x = std::min(b.min_x, x);
      b.min_y = std::min(b.min_y, y);
      b.max_x = std::max(b.max_x, x);
      b.max_y = std::max(b.max_y, y);
    }
  }
  std::map<int, PixelMask> masks;
  for (const auto& [id, b] : boxes) {
    masks.emplace(id, PixelMask(b.min_x, b.min_y, b.max_x - b.min_x + 1, b.max_y - b.min_y + 1));
  }
  for (const FeatureSample& s : frame.samples()) masks.at(s.instance).set(s.pixel_x(), s.pixel_y());

  std::vector<InstanceMask> out;
  for (auto& [id, mask] : masks) {
    if (noise.drop_probability > 0 || noise.erosion_radius > 0) {
      Rng rng(derive_seed(noise.seed, static_cast<std::uint64_t>(frame.frame_id()),
                          static_cast<std::uint64_t>(id)));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      if (unit(rng) < noise.drop_probability) continue;
      mask = erode(mask, noise.erosion_radius);
      if (mask.empty()) continue;
    }
    out.push_back({id, std::move(mask)});
  }
  return out;
}

}  // namespace mvr
