#include "asnet/pce.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "asnet/error.hpp"
#include "asnet/log.hpp"

namespace asnet::pce {

namespace {

using linalg::Index;

void enumerate_degree(std::size_t dim, std::size_t pos, unsigned remaining,
                      std::vector<unsigned>& cur, std::vector<std::vector<unsigned>>& out) {
  if (pos + 1 == dim) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (unsigned a = 0; a <= remaining; ++a) {
    cur[pos] = a;
    enumerate_degree(dim, pos + 1, remaining - a, cur, out);
  }
  cur[pos] = 0;
}

// Hermite values and derivatives for every coordinate of one standardized row.
struct HermiteTable {
  Matrix values;  // dim x (order+1)
  Matrix derivs;  // dim x (order+1)
};

HermiteTable hermite_table(std::size_t order, std::span<const double> zs, bool with_derivs) {
  HermiteTable t;
  const auto dim = static_cast<Index>(zs.size());
  t.values.resize(dim, static_cast<Index>(order + 1));
  if (with_derivs) t.derivs.resize(dim, static_cast<Index>(order + 1));
  for (Index j = 0; j < dim; ++j) {
    t.values.row(j) = hermite_eval(order, zs[static_cast<std::size_t>(j)]).transpose();
    if (with_derivs) t.derivs.row(j) = hermite_derivative(order, zs[static_cast<std::size_t>(j)]).transpose();
  }
  return t;
}

void basis_from_table(const MultiIndexSet& set, const HermiteTable& t, double* out) {
  for (std::size_t a = 0; a < set.size(); ++a) {
    double v = 1.0;
    for (const auto& [j, k] : set.terms[a]) v *= t.values(j, k);
    out[a] = v;
  }
}

void check_model_input(const PceModel& m, std::size_t cols) {
  if (cols != m.dim())
    throw ShapeError("pce: input has " + std::to_string(cols) + " coordinates, model expects " +
                     std::to_string(m.dim()));
}

}  // namespace

std::size_t basis_size(std::size_t dim, std::size_t order) {
  // C(dim+order, order) built incrementally; every partial product is an integer.
  std::size_t result = 1;
  for (std::size_t i = 1; i <= order; ++i) {
    const std::size_t num = dim + i;
    if (result > std::numeric_limits<std::size_t>::max() / num)
      throw ShapeError("basis_size: C(r+p, p) overflows");
    result = result * num / i;
  }
  return result;
}

MultiIndexSet multi_indices(std::size_t dim, std::size_t order) {
  if (dim < 1) throw ShapeError("multi_indices: dimension must be >= 1");
  const std::size_t n = basis_size(dim, order);
  MultiIndexSet set;
  set.dim = dim;
  set.order = order;
  set.indices.reserve(n);
  std::vector<unsigned> cur(dim, 0);
  for (unsigned d = 0; d <= order; ++d) enumerate_degree(dim, 0, d, cur, set.indices);
  set.terms.reserve(n);
  for (const auto& alpha : set.indices) {
    std::vector<std::pair<unsigned, unsigned>> t;
    for (unsigned j = 0; j < dim; ++j)
      if (alpha[j] != 0) t.emplace_back(j, alpha[j]);
    set.terms.push_back(std::move(t));
  }
  return set;
}

Vector hermite_eval(std::size_t p, double z) {
  // Recurrence on the normalized family:
  // h_{k+1} = (z h_k - sqrt(k) h_{k-1}) / sqrt(k+1)
  Vector h(static_cast<Index>(p + 1));
  h(0) = 1.0;
  if (p >= 1) h(1) = z;
  for (std::size_t k = 1; k < p; ++k) {
    const auto i = static_cast<Index>(k);
    h(i + 1) = (z * h(i) - std::sqrt(static_cast<double>(k)) * h(i - 1)) /
               std::sqrt(static_cast<double>(k + 1));
  }
  return h;
}

Vector hermite_derivative(std::size_t p, double z) {
  const Vector h = hermite_eval(p, z);
  Vector d = Vector::Zero(static_cast<Index>(p + 1));
  for (std::size_t k = 1; k <= p; ++k)
    d(static_cast<Index>(k)) = std::sqrt(static_cast<double>(k)) * h(static_cast<Index>(k - 1));
  return d;
}

Vector basis_eval(const MultiIndexSet& set, std::span<const double> z) {
  if (z.size() != set.dim) throw ShapeError("basis_eval: dimension mismatch");
  Vector out(static_cast<Index>(set.size()));
  basis_from_table(set, hermite_table(set.order, z, false), out.data());
  return out;
}

Matrix basis_matrix(const MultiIndexSet& set, const Matrix& z) {
  if (static_cast<std::size_t>(z.cols()) != set.dim) throw ShapeError("basis_matrix: dimension mismatch");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> out(
      z.rows(), static_cast<Index>(set.size()));
  std::vector<double> row(set.dim);
  for (Index i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < set.dim; ++j) row[j] = z(i, static_cast<Index>(j));
    basis_from_table(set, hermite_table(set.order, row, false), out.row(i).data());
  }
  return out;
}

PceModel PceModel::make(MultiIndexSet set, Matrix coeffs, Vector mean, Vector stddev) {
  if (static_cast<std::size_t>(coeffs.rows()) != set.size())
    throw ShapeError("PceModel: coefficient rows do not match basis size");
  if (static_cast<std::size_t>(mean.size()) != set.dim ||
      static_cast<std::size_t>(stddev.size()) != set.dim)
    throw ShapeError("PceModel: standardization vectors do not match dimension");
  if (!coeffs.allFinite()) throw NumericError("PceModel: non-finite coefficients");
  if (!(stddev.array() > 0.0).all()) throw NumericError("PceModel: stddev must be positive");
  return PceModel{std::move(set), std::move(coeffs), std::move(mean), std::move(stddev)};
}

FitResult fit(const Matrix& z, const Matrix& y, std::size_t order, double ridge) {
  const Index m = z.rows();
  if (m < 1) throw ShapeError("pce::fit: no samples");
  if (y.rows() != m) throw ShapeError("pce::fit: z and y row counts differ");
  if (z.cols() < 1 || y.cols() < 1) throw ShapeError("pce::fit: empty input or output dimension");
  if (!z.allFinite() || !y.allFinite()) throw NumericError("pce::fit: non-finite samples");

  FitResult out;
  MultiIndexSet set = multi_indices(static_cast<std::size_t>(z.cols()), order);
  const std::size_t n_basis = set.size();
  out.report.samples = static_cast<std::size_t>(m);
  out.report.basis = n_basis;
  if (static_cast<std::size_t>(m) < 2 * n_basis) {
    out.report.warnings.push_back("pce::fit: " + std::to_string(m) + " samples is below the " +
                                  std::to_string(2 * n_basis) + " suggested for " +
                                  std::to_string(n_basis) + " basis functions");
  }

  const Vector mean = z.colwise().mean().transpose();
  Vector stddev = ((z.rowwise() - mean.transpose()).cwiseAbs2().colwise().sum().transpose() /
                   static_cast<double>(m))
                      .cwiseSqrt();
  for (Index j = 0; j < stddev.size(); ++j) {
    if (!(stddev(j) > 1e-12 * std::max(1.0, std::abs(mean(j))))) {
      stddev(j) = 1.0;
      out.report.warnings.push_back("pce::fit: coordinate " + std::to_string(j) +
                                    " has zero variance; stddev clamped to 1");
    }
  }
  for (const auto& w : out.report.warnings) log::warn(w);

  const Matrix zs = (z.rowwise() - mean.transpose()).array().rowwise() / stddev.transpose().array();
  const Matrix phi = basis_matrix(set, zs);
  Matrix coeffs = linalg::lstsq(phi, y, ridge);
  out.report.residual = (phi * coeffs - y).squaredNorm() / static_cast<double>(m);
  out.model = PceModel::make(std::move(set), std::move(coeffs), mean, std::move(stddev));
  return out;
}

Matrix standardize(const PceModel& model, const Matrix& z) {
  check_model_input(model, static_cast<std::size_t>(z.cols()));
  return (z.rowwise() - model.mean.transpose()).array().rowwise() / model.stddev.transpose().array();
}

Vector predict(const PceModel& model, std::span<const double> z) {
  check_model_input(model, z.size());
  std::vector<double> zs(z.size());
  for (std::size_t j = 0; j < z.size(); ++j)
    zs[j] = (z[j] - model.mean(static_cast<Index>(j))) / model.stddev(static_cast<Index>(j));
  return model.coeffs.transpose() * basis_eval(model.index_set, zs);
}

Matrix predict(const PceModel& model, const Matrix& z) {
  return basis_matrix(model.index_set, standardize(model, z)) * model.coeffs;
}

PceBatchGradient pce_backward(const PceModel& model, const Matrix& z, const Matrix& upstream) {
  check_model_input(model, static_cast<std::size_t>(z.cols()));
  if (upstream.rows() != z.rows() || static_cast<std::size_t>(upstream.cols()) != model.outputs())
    throw ShapeError("pce_backward: upstream gradient shape mismatch");

  const MultiIndexSet& set = model.index_set;
  const Matrix zs = standardize(model, z);
  PceBatchGradient out;
  out.dz = Matrix::Zero(z.rows(), z.cols());

  // dL/dPhi for every row: m x n_basis.
  const Matrix dphi = upstream * model.coeffs.transpose();
  Matrix phi(z.rows(), static_cast<Index>(set.size()));
  std::vector<double> row(set.dim);
  std::vector<double> basis(set.size());
  for (Index i = 0; i < z.rows(); ++i) {
    for (std::size_t j = 0; j < set.dim; ++j) row[j] = zs(i, static_cast<Index>(j));
    const HermiteTable t = hermite_table(set.order, row, true);
    basis_from_table(set, t, basis.data());
    for (std::size_t a = 0; a < set.size(); ++a) {
      phi(i, static_cast<Index>(a)) = basis[a];
      const double g = dphi(i, static_cast<Index>(a));
      const auto& terms = set.terms[a];
      for (std::size_t s = 0; s < terms.size(); ++s) {
        double d = t.derivs(terms[s].first, terms[s].second);
        for (std::size_t q = 0; q < terms.size(); ++q)
          if (q != s) d *= t.values(terms[q].first, terms[q].second);
        out.dz(i, terms[s].first) += g * d;
      }
    }
  }
  out.dz = out.dz.array().rowwise() / model.stddev.transpose().array();
  out.dcoeffs = phi.transpose() * upstream;
  return out;
}

PceGradient pce_backward(const PceModel& model, std::span<const double> z, const Vector& upstream) {
  check_model_input(model, z.size());
  Matrix zr(1, static_cast<Index>(z.size()));
  for (std::size_t j = 0; j < z.size(); ++j) zr(0, static_cast<Index>(j)) = z[j];
  const PceBatchGradient g = pce_backward(model, zr, upstream.transpose());
  return {g.dz.row(0).transpose(), g.dcoeffs};
}

}  // namespace asnet::pce
