#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "curricuweb/errors.hpp"
#include "curricuweb/parallel.hpp"
#include "curricuweb/rng.hpp"

using namespace curricuweb;

TEST_CASE("same seed gives the same stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("split does not advance the parent and differs by tag") {
    Rng a(5);
    const Rng before = a;
    Rng c1 = a.split("x"), c2 = a.split("y"), c3 = a.split("x");
    Rng copy = before;
    CHECK(a.next_u64() == copy.next_u64());
    const auto v1 = c1.next_u64(), v2 = c2.next_u64(), v3 = c3.next_u64();
    CHECK(v1 == v3);
    CHECK(v1 != v2);
}

TEST_CASE("uniform and below stay in range") {
    Rng r(9);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        CHECK(r.below(7) < 7u);
    }
}

TEST_CASE("normal has roughly unit moments") {
    Rng r(11);
    double s = 0, s2 = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    CHECK(std::abs(s / n) < 0.01);
    CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("shuffle is a permutation") {
    Rng r(3);
    std::vector<int> v(50);
    std::iota(v.begin(), v.end(), 0);
    r.shuffle(std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[std::size_t(i)] == i);
}

TEST_CASE("fnv1a64 known vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
}

TEST_CASE("parallel_for fills every slot and rethrows") {
    setenv("CURRICUWEB_THREADS", "4", 1);
    CHECK(worker_threads() == 4);
    std::vector<int> out(1000, 0);
    parallel_for(out.size(), [&](std::size_t i) { out[i] = int(i) * 2; });
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == int(i) * 2);
    CHECK_THROWS_AS(parallel_for(10, [](std::size_t i) {
                        if (i == 3) throw std::runtime_error("boom");
                    }),
                    std::runtime_error);
    setenv("CURRICUWEB_THREADS", "zero", 1);
    CHECK(worker_threads() == 1);
    unsetenv("CURRICUWEB_THREADS");
    CHECK(worker_threads() == 1);
}

TEST_CASE("error families map to exit codes") {
    CHECK(exit_code_for(ConfigError("x").family()) == 2);
    CHECK(exit_code_for(ScheduleError("x").family()) == 2);
    CHECK(exit_code_for(DataError("x").family()) == 3);
    CHECK(exit_code_for(FormatError("x").family()) == 3);
    CHECK(exit_code_for(TransportError("x", true).family()) == 4);
}
