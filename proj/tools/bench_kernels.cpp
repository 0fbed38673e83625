// Benchmarks the production kernels against the serial reference
// implementations on TeliNet-sized problems and cross-checks their outputs.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <vector>

#include "CLI11.hpp"
#include "teli/kernels.hpp"
#include "teli/reference.hpp"
#include "teli/rng.hpp"

using clock_type = std::chrono::steady_clock;

namespace {

void fill_random(teli::Tensor& t, teli::Rng& rng) {
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-1.0f, 1.0f);
}

double max_abs_diff(const teli::Tensor& a, const teli::Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, static_cast<double>(std::fabs(a[i] - b[i])));
  }
  return m;
}

template <typename F>
double time_best_of(F&& fn, int reps) {
  double best = 1e100;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    fn();
    best = std::min(best, std::chrono::duration<double>(clock_type::now() - t0).count());
  }
  return best;
}

void report(const char* name, double flops, double serial_s, double parallel_s, double diff) {
  std::printf("%-28s reference %8.3f ms (%6.2f GF/s)   production %8.3f ms (%6.2f GF/s)   "
              "speedup %5.1fx   max|diff| %.2e\n",
              name, serial_s * 1e3, flops / serial_s / 1e9, parallel_s * 1e3,
              flops / parallel_s / 1e9, serial_s / parallel_s, diff);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TeliNet kernel benchmark: production (OpenMP) vs serial reference"};
  int reps = 3;
  app.add_option("--reps", reps, "timing repetitions (best-of)")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  teli::Rng rng(42);

  {
    // the dominant TeliNet convolution: 16 -> 32 channels at 256x256
    teli::Tensor input({1, 16, 256, 256});
    teli::Tensor weights({32, 16, 3, 3});
    teli::Tensor bias({32});
    fill_random(input, rng);
    fill_random(weights, rng);
    fill_random(bias, rng);
    teli::Tensor ref_out, out;
    const double serial_s = time_best_of(
        [&] { ref_out = teli::ref::conv2d_forward(input, weights, bias); }, reps);
    const double parallel_s =
        time_best_of([&] { out = teli::conv2d_forward(input, weights, bias); }, reps);
    const double flops = 2.0 * 256 * 256 * 32 * 16 * 9;
    report("conv2d 16->32 @256x256", flops, serial_s, parallel_s, max_abs_diff(ref_out, out));
  }

  {
    teli::Tensor a({256, 1024});
    teli::Tensor b({1024, 512});
    fill_random(a, rng);
    fill_random(b, rng);
    teli::Tensor ref_out, out;
    const double serial_s = time_best_of([&] { ref_out = teli::ref::matmul(a, b); }, reps);
    const double parallel_s = time_best_of([&] { out = teli::matmul(a, b); }, reps);
    const double flops = 2.0 * 256 * 1024 * 512;
    report("matmul 256x1024x512", flops, serial_s, parallel_s, max_abs_diff(ref_out, out));
  }

  {
    teli::Tensor input({4, 32, 256, 256});
    fill_random(input, rng);
    teli::Tensor ref_out, out;
    const double serial_s =
        time_best_of([&] { ref_out = teli::ref::maxpool2d_forward(input); }, reps);
    const double parallel_s =
        time_best_of([&] { out = teli::maxpool2d_forward(input).output; }, reps);
    const double flops = 3.0 * 4 * 32 * 128 * 128;  // comparisons per window
    report("maxpool2d @256x256", flops, serial_s, parallel_s, max_abs_diff(ref_out, out));
  }

  return 0;
}
