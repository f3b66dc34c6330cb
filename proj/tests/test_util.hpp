#pragma once

#include <cmath>
#include <random>

#include "vortexflow/wavefield.hpp"

namespace testutil {

/// Fixed-seed generator for hand-rolled property tests.
class Gen {
public:
    explicit Gen(unsigned long long seed) : eng_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(eng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(eng_); }

    vortexflow::Preset preset() {
        vortexflow::Preset p;
        p.family = static_cast<vortexflow::Family>(integer(0, 3));
        p.a = uniform(0.5, 1.6);
        p.b = uniform(0.5, 1.6);
        p.eps = p.family == vortexflow::Family::eps20 ? uniform(0.02, 0.3) : 0.0;
        p.c = std::sqrt(0.5);
        return p;
    }

    vortexflow::WaveSpec random_spec(int terms = 3) {
        vortexflow::WaveSpec s;
        s.c = uniform(0.4, 1.3);
        while (static_cast<int>(s.terms.size()) < terms) {
            const int n1 = integer(0, 3), n2 = integer(0, 2);
            bool dup = false;
            for (const auto& t : s.terms) dup = dup || (t.n1 == n1 && t.n2 == n2);
            if (!dup) s.terms.push_back({n1, n2, {uniform(-1, 1), uniform(-1, 1)}});
        }
        return s;
    }

private:
    std::mt19937_64 eng_;
};

inline const double kC = std::sqrt(0.5);

}  // namespace testutil
