#pragma once

#include <cstdint>
#include <vector>

#include "mvr/render.hpp"

namespace mvr {

/// Binary mask stored over its bounding window [x0, x0 + width) x [y0, y0 + height).
class PixelMask {
 public:
  PixelMask() = default;
  PixelMask(int x0, int y0, int width, int height);

  int x0() const { return x0_; }
  int y0() const { return y0_; }
  int width() const { return width_; }
  int height() const { return height_; }

  bool contains(int x, int y) const;
  void set(int x, int y, bool on = true);
  int count() const;
  bool empty() const { return count() == 0; }

  // Shrinks the window to the set pixels.
  PixelMask tight() const;

 private:
  int x0_ = 0, y0_ = 0, width_ = 0, height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Morphological erosion with a (2r+1) x (2r+1) square structuring element.
PixelMask erode(const PixelMask& mask, int radius);

struct InstanceMask {
  int instance_id = -1;
  PixelMask mask;
};

struct SegmentNoise {
  double drop_probability = 0.0;
  int erosion_radius = 0;
  std::uint64_t seed = 0;
};

/// Ground-truth instance masks with optional corruption. Masks come out
/// ordered by instance id and are pairwise disjoint.
std::vector<InstanceMask> segment(const Frame& frame, const SegmentNoise& noise = {});

/// The instance-segmentation slot of the pipeline.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual std::vector<InstanceMask> segment(const Frame& frame) const = 0;
};

class GroundTruthSegmenter final : public Segmenter {
 public:
  explicit GroundTruthSegmenter(SegmentNoise noise = {}) : noise_(noise) {}
  std::vector<InstanceMask> segment(const Frame& frame) const override {
    return mvr::segment(frame, noise_);
  }

 private:
  SegmentNoise noise_;
};

}  // namespace mvr
