#include "morbo/candidates.hpp"

#include <bit>
#include <cmath>
#include <random>

#include <boost/random/sobol.hpp>

namespace morbo::candidates {

namespace {

constexpr int kBits = 32;
constexpr double kScale = 1.0 / 4294967296.0;  // 2^-32

// Random linear scramble of one coordinate: bit i of the output is the parity
// of (rows[i] & v). Rows form a lower-triangular matrix with unit diagonal in
// MSB-first order, so the map is a bijection that preserves the net property.
struct Scramble {
    std::uint32_t rows[kBits];
    std::uint32_t shift;

    std::uint32_t apply(std::uint32_t v) const {
        std::uint32_t out = 0;
        for (int i = 0; i < kBits; ++i) {
            out |= static_cast<std::uint32_t>(std::popcount(rows[i] & v) & 1) << (kBits - 1 - i);
        }
        return out ^ shift;
    }
};

Scramble draw_scramble(std::mt19937_64& rng) {
    Scramble s{};
    for (int i = 0; i < kBits; ++i) {
        // Output bit at significance i (MSB first) depends on input bits of
        // significance <= i, with a one on the diagonal.
        const std::uint32_t diag = 1u << (kBits - 1 - i);
        const std::uint32_t higher = ~((diag << 1) - 1u);  // more significant bits
        const std::uint32_t random = static_cast<std::uint32_t>(rng());
        s.rows[i] = diag | (random & higher);
    }
    s.shift = static_cast<std::uint32_t>(rng());
    return s;
}

}  // namespace

Matrix sobol(std::size_t n, Eigen::Index d, std::uint64_t seed, std::size_t start) {
    if (d < 1) throw InvalidArgument("sobol: dimension must be at least 1");
    if (d > 3667) throw UnsupportedError("sobol: at most 3667 dimensions are supported");
    const auto dims = static_cast<std::size_t>(d);
    std::mt19937_64 rng(seed);
    std::vector<Scramble> scr;
    scr.reserve(dims);
    for (std::size_t j = 0; j < dims; ++j) scr.push_back(draw_scramble(rng));

    Matrix out(static_cast<Eigen::Index>(n), d);
    if (n == 0) return out;
    boost::random::sobol_engine<std::uint32_t, kBits> engine(dims);
    // Boost's stream begins at the second point of the sequence.
    std::size_t row = 0;
    if (start == 0) {
        for (std::size_t j = 0; j < dims; ++j) {
            out(0, static_cast<Eigen::Index>(j)) = scr[j].apply(0u) * kScale;
        }
        row = 1;
    } else {
        engine.seed(static_cast<std::uint32_t>(start - 1));
    }
    for (; row < n; ++row) {
        for (std::size_t j = 0; j < dims; ++j) {
            out(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) =
                scr[j].apply(engine()) * kScale;
        }
    }
    return out;
}

double PerturbSchedule::p0() const { return std::min(scale / static_cast<double>(d), 1.0); }

double perturb_prob(long n, const PerturbSchedule& sched) {
    const long b = sched.budget();
    if (b < 2) throw InvalidConfig("perturb_prob: nf - n0 must be at least 2");
    if (sched.d < 1) throw InvalidConfig("perturb_prob: dimension must be positive");
    const long n_prime = std::min(std::max(n - sched.n0, 1L), b);
    return sched.p0() *
           (1.0 - 0.5 * std::log(static_cast<double>(n_prime)) / std::log(static_cast<double>(b)));
}

Matrix gen_candidates(const trust_region::TrustRegion& tr, std::span<const Vector> base_points,
                      std::size_t r, double p, std::uint64_t seed) {
    if (r < 1) throw InvalidArgument("gen_candidates: r must be at least 1");
    if (!(p > 0.0 && p <= 1.0)) throw InvalidArgument("gen_candidates: p must lie in (0, 1]");
    if (base_points.empty() && tr.center.size() == 0) {
        throw PreconditionError("gen_candidates: no base points and no center");
    }
    const Eigen::Index d = tr.center.size() ? tr.center.size() : base_points.front().size();
    const Box box = tr.bounds();
    const Vector width = box.upper - box.lower;

    const Matrix quasi = sobol(r, d, derive_seed(seed, {0x50b01}));
    std::mt19937_64 rng(derive_seed(seed, {0xba5e}));
    std::uniform_int_distribution<std::size_t> pick_base(
        0, base_points.empty() ? 0 : base_points.size() - 1);
    std::uniform_int_distribution<Eigen::Index> pick_dim(0, d - 1);
    std::bernoulli_distribution flip(p);

    Matrix out(static_cast<Eigen::Index>(r), d);
    for (Eigen::Index i = 0; i < out.rows(); ++i) {
        const Vector& base = base_points.empty() ? tr.center : base_points[pick_base(rng)];
        Eigen::Index replaced = 0;
        for (Eigen::Index j = 0; j < d; ++j) {
            if (flip(rng)) {
                out(i, j) = box.lower(j) + quasi(i, j) * width(j);
                ++replaced;
            } else {
                out(i, j) = base(j);
            }
        }
        if (replaced == 0) {
            const Eigen::Index j = pick_dim(rng);
            out(i, j) = box.lower(j) + quasi(i, j) * width(j);
        }
    }
    return out.cwiseMax(box.lower.transpose().replicate(out.rows(), 1))
        .cwiseMin(box.upper.transpose().replicate(out.rows(), 1));
}

}  // namespace morbo::candidates
