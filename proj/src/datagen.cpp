#include "gpfq/datagen.hpp"

#include <cmath>
#include <sstream>

#include "gpfq/error.hpp"
#include "gpfq/parallel.hpp"
#include "gpfq/rng.hpp"

namespace gpfq {
namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void validate_model(const DistributionModel& model, std::size_t m, std::size_t N0) {
  std::visit(overloaded{
                 [](const UniformBall& b) {
                   if (!(b.radius > 0.0)) throw Error(ErrorKind::InvalidSpec, "ball radius must be > 0");
                 },
                 [](const SymmetricBernoulli&) {},
                 [&](const GaussianClusters& g) {
                   if (!(g.sigma > 0.0)) throw Error(ErrorKind::InvalidSpec, "sigma must be > 0");
                   if (g.centers.empty() || g.per_cluster == 0) {
                     throw Error(ErrorKind::InvalidSpec, "clusters need d >= 1 and n >= 1");
                   }
                   if (g.per_cluster * g.centers.size() != m) {
                     throw Error(ErrorKind::InvalidSpec, "cluster rows n*d must equal m");
                   }
                   for (const auto& c : g.centers) {
                     if (c.size() != N0) {
                       throw Error(ErrorKind::InvalidSpec, "cluster centers need N0 entries");
                     }
                   }
                 },
                 [](const StandardNormal& s) {
                   if (!(s.sigma > 0.0)) throw Error(ErrorKind::InvalidSpec, "sigma must be > 0");
                 },
                 [&](const Subspace& s) {
                   if (!s.inner) throw Error(ErrorKind::InvalidSpec, "subspace needs an inner model");
                   if (s.dim == 0 || s.dim >= m) {
                     throw Error(ErrorKind::InvalidSpec, "subspace dimension must be in [1, m)");
                   }
                   validate_model(*s.inner, s.dim, N0);
                 },
             },
             model.kind);
}

// Fills column t of `out` from the stream (seed, t).
void sample_column(const DistributionModel& model, Matrix& out, std::size_t t,
                   std::uint64_t seed) {
  const std::size_t m = out.rows();
  Rng rng = Rng::stream(seed, {t});
  std::visit(overloaded{
                 [&](const UniformBall& b) {
                   std::vector<double> v(m);
                   double norm_sq = 0.0;
                   while (norm_sq == 0.0) {
                     for (double& x : v) x = rng.normal();
                     norm_sq = squared_norm(v);
                   }
                   const double radius =
                       b.radius * std::pow(rng.uniform(), 1.0 / static_cast<double>(m));
                   double scale = radius / std::sqrt(norm_sq);
                   for (double& x : v) x *= scale;
                   // Rounding can leave the norm a few ulps past r; pull it back inside.
                   while (squared_norm(v) > b.radius * b.radius) {
                     for (double& x : v) x *= (1.0 - 0x1.0p-50);
                   }
                   for (std::size_t i = 0; i < m; ++i) out(i, t) = v[i];
                 },
                 [&](const SymmetricBernoulli&) {
                   for (std::size_t i = 0; i < m; ++i) out(i, t) = (rng.next() >> 63) ? 1.0 : -1.0;
                 },
                 [&](const GaussianClusters& g) {
                   for (std::size_t c = 0; c < g.centers.size(); ++c) {
                     for (std::size_t k = 0; k < g.per_cluster; ++k) {
                       out(c * g.per_cluster + k, t) = g.centers[c][t] + g.sigma * rng.normal();
                     }
                   }
                 },
                 [&](const StandardNormal& s) {
                   for (std::size_t i = 0; i < m; ++i) out(i, t) = s.sigma * rng.normal();
                 },
                 [&](const Subspace&) {
                   throw Error(ErrorKind::InvalidSpec, "subspace sampled column-wise");
                 },
             },
             model.kind);
}

Matrix sample_model(const DistributionModel& model, std::size_t m, std::size_t N0,
                    std::uint64_t seed) {
  if (const auto* sub = std::get_if<Subspace>(&model.kind)) {
    const Matrix F = sample_model(*sub->inner, sub->dim, N0, derive_seed(seed, {1}));
    const Matrix V = random_orthonormal(m, sub->dim, derive_seed(seed, {2}));
    return matmul(V, F);
  }
  Matrix out(m, N0);
  parallel::parallel_for(N0, [&](std::size_t t) { sample_column(model, out, t, seed); });
  return out;
}

}  // namespace

DistributionModel make_subspace(std::size_t dim, DistributionModel inner) {
  return DistributionModel{Subspace{dim, std::make_shared<const DistributionModel>(std::move(inner))}};
}

std::string describe(const DistributionModel& model) {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const UniformBall& b) { os << "uniform_ball(r=" << b.radius << ")"; },
                 [&](const SymmetricBernoulli&) { os << "symmetric_bernoulli"; },
                 [&](const GaussianClusters& g) {
                   os << "gaussian_clusters(d=" << g.centers.size() << ";n=" << g.per_cluster
                      << ";sigma=" << g.sigma << ")";
                 },
                 [&](const StandardNormal& s) { os << "standard_normal(sigma=" << s.sigma << ")"; },
                 [&](const Subspace& s) {
                   os << "subspace(l=" << s.dim << ";" << (s.inner ? describe(*s.inner) : "?")
                      << ")";
                 },
             },
             model.kind);
  return os.str();
}

void validate(const DistributionSpec& spec) {
  if (spec.m == 0 || spec.N0 == 0) throw Error(ErrorKind::InvalidSpec, "m and N0 must be >= 1");
  validate_model(spec.model, spec.m, spec.N0);
}

Matrix sample(const DistributionSpec& spec) {
  validate(spec);
  return sample_model(spec.model, spec.m, spec.N0, spec.seed);
}

Matrix random_orthonormal(std::size_t m, std::size_t l, std::uint64_t seed) {
  if (l > m) throw Error(ErrorKind::InvalidSpec, "cannot fit l orthonormal columns in R^m");
  // Work on columns as contiguous rows of the transpose.
  Matrix cols(l, m);
  for (std::size_t j = 0; j < l; ++j) {
    Rng rng = Rng::stream(seed, {j});
    for (double& x : cols.row(j)) x = rng.normal();
  }
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t j = 0; j < l; ++j) {
      auto v = cols.row(j);
      for (std::size_t k = 0; k < j; ++k) {
        const auto e = cols.row(k);
        axpy(-dot(e, v), e, v);
      }
      const double n = std::sqrt(squared_norm(v));
      if (n == 0.0) throw Error(ErrorKind::InvalidSpec, "degenerate orthonormalization");
      for (double& x : v) x /= n;
    }
  }
  return cols.transposed();
}

bool is_generic(const std::vector<double>& w, double q_max) noexcept {
  return inf_norm(w) <= q_max &&
         squared_norm(w) >= static_cast<double>(w.size()) * q_max * q_max / 6.0;
}

std::vector<double> generic_weight(std::size_t N0, double q_max, std::uint64_t seed) {
  if (N0 == 0 || !(q_max > 0.0)) throw Error(ErrorKind::InvalidSpec, "generic_weight needs N0 >= 1, q_max > 0");
  Rng rng = Rng::stream(seed, {0x5EED});
  std::vector<double> w(N0);
  do {
    for (double& x : w) x = q_max * (2.0 * rng.uniform() - 1.0);
  } while (!is_generic(w, q_max));
  return w;
}

}  // namespace gpfq
