// Wall-clock comparison of the serial reference kernels and the OpenMP
// kernels, plus one full training step of the clean network.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>

#include <omp.h>

#include "antn/kernels.hpp"
#include "antn/losses.hpp"
#include "antn/segnets.hpp"

using namespace antn;
namespace k = antn::kernels;

namespace {

Tensor4 random_tensor(std::mt19937_64& rng, int h, int w, int c) {
    std::normal_distribution<double> d(0.0, 1.0);
    Tensor4 t = Tensor4::image(h, w, c);
    for (double& v : t.data) v = d(rng);
    return t;
}

std::vector<double> random_values(std::mt19937_64& rng, std::size_t n) {
    std::normal_distribution<double> d(0.0, 0.1);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

// Median of `reps` timings, in milliseconds.
double time_ms(const std::function<void()>& fn, int reps) {
    std::vector<double> t;
    for (int r = 0; r < reps; ++r) {
        const auto a = std::chrono::steady_clock::now();
        fn();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
    }
    std::nth_element(t.begin(), t.begin() + reps / 2, t.end());
    return t[static_cast<std::size_t>(reps / 2)];
}

void row(const char* name, double ref, double par) {
    std::printf("%-34s %10.3f %10.3f %8.2fx\n", name, ref, par, ref / par);
}

} // namespace

int main(int argc, char** argv) {
    k::apply_thread_env();
    const int size = argc > 1 ? std::atoi(argv[1]) : 64;
    const int reps = argc > 2 ? std::atoi(argv[2]) : 5;
    std::mt19937_64 rng(1);
    std::printf("image %dx%d, %d OpenMP threads, median of %d runs (ms)\n", size, size, omp_get_max_threads(), reps);
    std::printf("%-34s %10s %10s %9s\n", "kernel", "reference", "openmp", "speedup");

    for (auto [cin, cout] : {std::pair{3, 8}, std::pair{8, 8}, std::pair{16, 16}, std::pair{32, 32}}) {
        const k::ConvShape shape{3, cin, cout};
        const Tensor4 x = random_tensor(rng, size, size, cin);
        const auto w = random_values(rng, shape.weight_count());
        const auto b = random_values(rng, static_cast<std::size_t>(cout));
        const Tensor4 up = random_tensor(rng, size, size, cout);
        std::vector<double> gw(w.size()), gb(b.size());
        Tensor4 gx;
        char name[64];
        std::snprintf(name, sizeof name, "conv3x3 %d->%d forward", cin, cout);
        row(name, time_ms([&] { (void)k::reference::conv2d_forward(x, w, b, shape); }, reps),
            time_ms([&] { (void)k::conv2d_forward(x, w, b, shape); }, reps));
        std::snprintf(name, sizeof name, "conv3x3 %d->%d backward", cin, cout);
        row(name, time_ms([&] { k::reference::conv2d_backward(x, w, shape, up, &gx, gw, gb); }, reps),
            time_ms([&] { k::conv2d_backward(x, w, shape, up, &gx, gw, gb); }, reps));
    }

    const Tensor4 x = random_tensor(rng, size, size, 16);
    const Tensor4 pooled_up = random_tensor(rng, size / 2, size / 2, 16);
    row("maxpool2 forward", time_ms([&] { (void)k::reference::maxpool2_forward(x); }, reps),
        time_ms([&] { (void)k::maxpool2_forward(x); }, reps));
    row("maxpool2 backward", time_ms([&] { (void)k::reference::maxpool2_backward(x, pooled_up); }, reps),
        time_ms([&] { (void)k::maxpool2_backward(x, pooled_up); }, reps));
    row("upsample2 forward", time_ms([&] { (void)k::reference::upsample2_forward(pooled_up); }, reps),
        time_ms([&] { (void)k::upsample2_forward(pooled_up); }, reps));

    MiniUNetSpec spec;
    spec.base_filters = 8;
    spec.num_classes = 4;
    CleanNet net(spec, 1);
    const Tensor4 img = random_tensor(rng, size, size, 3);
    const ProbabilityField target = Tensor4::image(size, size, 4, 0.25);
    const double step = time_ms(
        [&] {
            const NetPass pass = net.forward(img);
            net.backward(pass, weighted_cross_entropy(pass.out, target).grad);
        },
        reps);
    std::printf("%-34s %21.3f\n", "mini u-net F=8 forward+backward", step);
    return 0;
}
