#include "teli/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace teli {

Tensor decode_image(const std::filesystem::path& path, int channels) {
  if (channels != 1 && channels != 3) {
    throw Error("decode_image supports 1 or 3 channels, got " + std::to_string(channels));
  }
  cv::Mat img = cv::imread(path.string(),
                           channels == 1 ? cv::IMREAD_GRAYSCALE : cv::IMREAD_COLOR);
  if (img.empty()) {
    throw DataError("cannot decode image: " + path.string());
  }
  const std::int64_t h = img.rows, w = img.cols;
  Tensor out({channels, h, w});
  if (channels == 1) {
    for (std::int64_t y = 0; y < h; ++y) {
      const std::uint8_t* row = img.ptr<std::uint8_t>(static_cast<int>(y));
      float* dst = out.data() + y * w;
      for (std::int64_t x = 0; x < w; ++x) dst[x] = static_cast<float>(row[x]);
    }
  } else {
    // OpenCV decodes BGR; store planes in RGB order
    for (std::int64_t y = 0; y < h; ++y) {
      const std::uint8_t* row = img.ptr<std::uint8_t>(static_cast<int>(y));
      for (std::int64_t x = 0; x < w; ++x) {
        out[(0 * h + y) * w + x] = static_cast<float>(row[3 * x + 2]);
        out[(1 * h + y) * w + x] = static_cast<float>(row[3 * x + 1]);
        out[(2 * h + y) * w + x] = static_cast<float>(row[3 * x + 0]);
      }
    }
  }
  return out;
}

Tensor bilinear_resize(const Tensor& src, std::int64_t out_h, std::int64_t out_w) {
  if (src.rank() != 3) {
    throw ShapeError("bilinear_resize expects [C,H,W], got " + shape_str(src.shape()));
  }
  const std::int64_t c = src.dim(0), h = src.dim(1), w = src.dim(2);
  if (h == out_h && w == out_w) return src;
  Tensor out({c, out_h, out_w});
  const float scale_y = static_cast<float>(h) / static_cast<float>(out_h);
  const float scale_x = static_cast<float>(w) / static_cast<float>(out_w);
  for (std::int64_t ch = 0; ch < c; ++ch) {
    const float* plane = src.data() + ch * h * w;
    float* dst = out.data() + ch * out_h * out_w;
    for (std::int64_t y = 0; y < out_h; ++y) {
      float sy = (static_cast<float>(y) + 0.5f) * scale_y - 0.5f;
      if (sy < 0.0f) sy = 0.0f;
      std::int64_t y0 = static_cast<std::int64_t>(sy);
      if (y0 > h - 1) y0 = h - 1;
      const std::int64_t y1 = y0 + 1 < h ? y0 + 1 : h - 1;
      const float fy = sy - static_cast<float>(y0);
      for (std::int64_t x = 0; x < out_w; ++x) {
        float sx = (static_cast<float>(x) + 0.5f) * scale_x - 0.5f;
        if (sx < 0.0f) sx = 0.0f;
        std::int64_t x0 = static_cast<std::int64_t>(sx);
        if (x0 > w - 1) x0 = w - 1;
        const std::int64_t x1 = x0 + 1 < w ? x0 + 1 : w - 1;
        const float fx = sx - static_cast<float>(x0);
        const float top = plane[y0 * w + x0] * (1.0f - fx) + plane[y0 * w + x1] * fx;
        const float bottom = plane[y1 * w + x0] * (1.0f - fx) + plane[y1 * w + x1] * fx;
        dst[y * out_w + x] = top * (1.0f - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Tensor load_image(const std::filesystem::path& path, std::int64_t target_size, int channels) {
  Tensor raw = decode_image(path, channels);
  Tensor resized = bilinear_resize(raw, target_size, target_size);
  const std::int64_t total = resized.numel();
  for (std::int64_t i = 0; i < total; ++i) resized[i] *= 1.0f / 255.0f;
  return resized;
}

void write_png_gray(const std::filesystem::path& path, std::int64_t height, std::int64_t width,
                    const std::vector<std::uint8_t>& pixels) {
  if (static_cast<std::int64_t>(pixels.size()) != height * width) {
    throw Error("write_png_gray pixel buffer does not match dimensions");
  }
  cv::Mat img(static_cast<int>(height), static_cast<int>(width), CV_8UC1);
  for (std::int64_t y = 0; y < height; ++y) {
    std::memcpy(img.ptr(static_cast<int>(y)), pixels.data() + y * width,
                static_cast<std::size_t>(width));
  }
  if (!cv::imwrite(path.string(), img)) {
    throw DataError("cannot write image: " + path.string());
  }
}

}  // namespace teli
