#include <doctest.h>

#include <random>

#include "axisfit/frame_kernels.hpp"
#include "axisfit/simulation.hpp"

using namespace axisfit;

namespace {

SubjectData noisy_subject(std::uint64_t seed, int n) {
  std::mt19937_64 rng(seed);
  return simulate_subject(default_angles(), n, MotionModel{}, 0.017, rng);
}

}  // namespace

TEST_CASE("avx2 kernels match scalar reference") {
  if (!kernel_isa_supported(KernelIsa::avx2)) {
    MESSAGE("avx2 not available, skipped");
    return;
  }
  for (int n : {1, 3, 4, 5, 8, 17, 50, 1001}) {
    const SubjectData s = noisy_subject(100 + n, n);
    for (bool reduced : {false, true}) {
      const FrameGeometry g = reduced ? make_reduced_geometry(0.1, -0.1, 0.7, 0.4)
                                      : make_geometry(AnatomicalAngles::from_degrees(5, -3, 40, 20, 15));
      FrameTerms a, b;
      kernels::evaluate_frames_scalar(s.frames(), g, a);
      kernels::evaluate_frames_avx2(s.frames(), g, b);
      REQUIRE(a.size() == b.size());
      for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(b.u[i] == doctest::Approx(a.u[i]).epsilon(1e-13).scale(1.0));
        CHECK(b.residual[i] == doctest::Approx(a.residual[i]).epsilon(1e-12).scale(1.0));
        for (int c = 0; c < g.columns(); ++c) {
          CHECK(b.design[c][i] == doctest::Approx(a.design[c][i]).epsilon(1e-12).scale(1.0));
        }
      }
      NormalEquations na, nb;
      kernels::accumulate_scalar(a, na);
      kernels::accumulate_avx2(a, nb);
      CHECK((na.xtx - nb.xtx).norm() <= 1e-12 * (1.0 + na.xtx.norm()));
      CHECK((na.xtr - nb.xtr).norm() <= 1e-12 * (1.0 + na.xtr.norm()));
      CHECK(nb.rss == doctest::Approx(na.rss).epsilon(1e-12));
    }
  }
}

TEST_CASE("kernel selection") {
  const KernelIsa before = active_kernel_isa();
  set_kernel_isa(KernelIsa::scalar);
  CHECK(active_kernel_isa() == KernelIsa::scalar);
  CHECK(to_string(KernelIsa::scalar) == "scalar");
  if (!kernel_isa_supported(KernelIsa::avx2)) CHECK_THROWS_AS(set_kernel_isa(KernelIsa::avx2), Error);
  set_kernel_isa(before);
}

TEST_CASE("frame block round trip") {
  const SubjectData s = noisy_subject(9, 7);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK((s.frames().frame(i) - s.rotations()[i].matrix()).norm() == 0.0);
}
