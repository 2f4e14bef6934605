#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <new>
#include <stdexcept>
#include <string>
#include <vector>

namespace wise {

// Error hierarchy. Every error carries a short category tag that the CLI
// prints as a machine-parsable prefix.
class Error : public std::runtime_error {
 public:
  Error(std::string category, const std::string& what)
      : std::runtime_error(what), category_(std::move(category)) {}
  const std::string& category() const noexcept { return category_; }

 private:
  std::string category_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error("config", w) {}
};
struct DomainError : Error {
  explicit DomainError(const std::string& w) : Error("domain", w) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& w) : Error("shape", w) {}
};
struct FormatError : Error {
  explicit FormatError(const std::string& w) : Error("format", w) {}
};
struct IngestionError : Error {
  explicit IngestionError(const std::string& w) : Error("ingestion", w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error("numeric", w) {}
};

struct Pixel {
  int row = 0;
  int col = 0;
  auto operator<=>(const Pixel&) const = default;
};

// Row-major binary mask.
class Mask {
 public:
  Mask() = default;
  Mask(int height, int width, bool fill = false)
      : height_(height), width_(width),
        bits_(static_cast<std::size_t>(height) * width, fill ? 1 : 0) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return bits_.size(); }

  bool operator()(int r, int c) const { return bits_[index(r, c)] != 0; }
  void set(int r, int c, bool v = true) { bits_[index(r, c)] = v ? 1 : 0; }
  bool at(std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v = true) { bits_[i] = v ? 1 : 0; }

  bool contains(Pixel p) const {
    return in_bounds(p) && (*this)(p.row, p.col);
  }
  bool in_bounds(Pixel p) const {
    return p.row >= 0 && p.col >= 0 && p.row < height_ && p.col < width_;
  }

  std::size_t area() const {
    return static_cast<std::size_t>(
        std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool empty() const { return area() == 0; }
  bool same_shape(const Mask& o) const {
    return height_ == o.height_ && width_ == o.width_;
  }

  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  bool operator==(const Mask&) const = default;

 private:
  std::size_t index(int r, int c) const {
    return static_cast<std::size_t>(r) * width_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Numeric buffers start on a cache-line boundary. Vectorized reductions
// split their work according to the start address, so unaligned buffers
// would make floating-point results depend on where malloc put them.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

// Channel-major (C x H x W) dense tensor for one image.
template <typename T>
class Tensor3 {
 public:
  using value_type = T;

  Tensor3() = default;
  Tensor3(int channels, int height, int width, T fill = T{})
      : channels_(channels), height_(height), width_(width),
        data_(static_cast<std::size_t>(channels) * height * width, fill) {}

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t size() const noexcept { return data_.size(); }

  T& operator()(int c, int r, int col) {
    return data_[c * plane() + static_cast<std::size_t>(r) * width_ + col];
  }
  const T& operator()(int c, int r, int col) const {
    return data_[c * plane() + static_cast<std::size_t>(r) * width_ + col];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  T* channel(int c) noexcept { return data_.data() + c * plane(); }
  const T* channel(int c) const noexcept { return data_.data() + c * plane(); }

  Buffer<T>& values() noexcept { return data_; }
  const Buffer<T>& values() const noexcept { return data_; }

  bool same_shape(const Tensor3& o) const {
    return channels_ == o.channels_ && height_ == o.height_ &&
           width_ == o.width_;
  }

  template <typename U>
  Tensor3<U> cast() const {
    Tensor3<U> out(channels_, height_, width_);
    std::transform(data_.begin(), data_.end(), out.values().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const Tensor3&) const = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  Buffer<T> data_;
};

// RGB image in [0,1], 3 x H x W.
using Image = Tensor3<float>;

// Per-pixel class probabilities; channel 0 is background.
template <typename S>
using ClassScoreMap = Tensor3<S>;

// Per-pixel embedding vectors, d x H x W.
template <typename S>
using EmbeddingMap = Tensor3<S>;

inline Mask mask_union(const std::vector<Mask>& masks, int height, int width) {
  Mask out(height, width);
  for (const auto& m : masks)
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m.at(i)) out.set(i);
  return out;
}

inline Mask mask_complement(const Mask& m) {
  Mask out(m.height(), m.width());
  for (std::size_t i = 0; i < m.size(); ++i) out.set(i, !m.at(i));
  return out;
}

// Intersection over union; 0 when both masks are empty.
inline double jaccard(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw DomainError("jaccard: mask shapes differ");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a.at(i), y = b.at(i);
    inter += (x && y);
    uni += (x || y);
  }
  return uni == 0 ? 0.0 : double(inter) / double(uni);
}

inline std::vector<Pixel> mask_pixels(const Mask& m) {
  std::vector<Pixel> out;
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c)
      if (m(r, c)) out.push_back({r, c});
  return out;
}

}  // namespace wise
