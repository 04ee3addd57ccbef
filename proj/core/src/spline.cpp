#include "fieldloom/spline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "fieldloom/errors.hpp"
#include "fieldloom/optim.hpp"
#include "text_util.hpp"

namespace fieldloom {

void SplineSpec::validate() const {
    if (degree < 0) throw UsageError("spline degree must be >= 0");
    if (basis_count < degree + 1) throw UsageError("spline basis count must be >= degree + 1");
    if (bounds.empty()) throw UsageError("spline needs at least one input dimension");
    for (const auto& b : bounds)
        if (!(std::isfinite(b.low) && std::isfinite(b.high) && b.low < b.high))
            throw UsageError("spline bounds need low < high");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("spline lambda must be >= 0");
    if (feature_count() > max_features)
        throw UsageError("spline design has " + std::to_string(feature_count()) + " features, above the cap of " +
                         std::to_string(max_features));
}

std::size_t SplineSpec::feature_count() const {
    std::size_t f = 1;
    for (int k = 0; k < dim(); ++k) {
        f *= static_cast<std::size_t>(basis_count);
        if (f > max_features * 16) break;
    }
    return f;
}

std::vector<double> SplineSpec::knots(int k) const {
    const auto& b = bounds.at(static_cast<std::size_t>(k));
    const int interior = basis_count - degree - 1;
    std::vector<double> u;
    u.reserve(static_cast<std::size_t>(basis_count + degree + 1));
    for (int i = 0; i <= degree; ++i) u.push_back(b.low);
    for (int j = 1; j <= interior; ++j) u.push_back(b.low + j * (b.high - b.low) / (interior + 1));
    for (int i = 0; i <= degree; ++i) u.push_back(b.high);
    return u;
}

SplineSpec spline_spec_for(const PointSet& all, int basis_count, double lambda, int degree) {
    if (all.empty()) throw DataError("spline bounds need at least one record");
    SplineSpec spec;
    spec.degree = degree;
    spec.basis_count = basis_count;
    spec.lambda = lambda;
    spec.bounds.assign(static_cast<std::size_t>(all.dim), Bounds{INFINITY, -INFINITY});
    for (std::size_t i = 0; i < all.size(); ++i) {
        const auto x = all.point(i);
        for (int k = 0; k < all.dim; ++k) {
            spec.bounds[k].low = std::min(spec.bounds[k].low, x[k]);
            spec.bounds[k].high = std::max(spec.bounds[k].high, x[k]);
        }
    }
    for (const auto& b : spec.bounds)
        if (!(b.low < b.high)) throw DataError("coordinate range is degenerate; spline bounds need low < high");
    spec.validate();
    return spec;
}

namespace {

// Non-zero basis values at x: returns the first index, fills degree+1 values.
int basis_span(const SplineSpec& spec, const std::vector<double>& u, double x, double* out) {
    const int p = spec.degree;
    const int n = spec.basis_count - 1;
    x = std::clamp(x, u.front(), u.back());
    int s = n;
    if (x < u[static_cast<std::size_t>(n + 1)]) {
        s = static_cast<int>(std::upper_bound(u.begin() + p, u.begin() + n + 1, x) - u.begin()) - 1;
    }
    std::vector<double> left(static_cast<std::size_t>(p + 1)), right(static_cast<std::size_t>(p + 1));
    out[0] = 1.0;
    for (int j = 1; j <= p; ++j) {
        left[j] = x - u[static_cast<std::size_t>(s + 1 - j)];
        right[j] = u[static_cast<std::size_t>(s + j)] - x;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = out[r] / (right[r + 1] + left[j - r]);
            out[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        out[j] = saved;
    }
    return s - p;
}

}  // namespace

std::vector<double> bspline_basis(const SplineSpec& spec, int k, double x) {
    spec.validate();
    if (k < 0 || k >= spec.dim()) throw UsageError("spline dimension index out of range");
    const auto u = spec.knots(k);
    std::vector<double> local(static_cast<std::size_t>(spec.degree + 1));
    const int first = basis_span(spec, u, x, local.data());
    std::vector<double> out(static_cast<std::size_t>(spec.basis_count), 0.0);
    for (int j = 0; j <= spec.degree; ++j) out[static_cast<std::size_t>(first + j)] = local[j];
    return out;
}

std::vector<double> SplineDesign::dense_row(std::size_t i) const {
    std::vector<double> row(features + 1, 0.0);
    for (std::size_t j = 0; j < nnz_per_row; ++j) row[cols[i * nnz_per_row + j]] += values[i * nnz_per_row + j];
    row[features] = 1.0;
    return row;
}

double SplineDesign::dot(std::size_t i, std::span<const double> w) const {
    double z = w[features];
    const std::size_t base = i * nnz_per_row;
    for (std::size_t j = 0; j < nnz_per_row; ++j) z += values[base + j] * w[cols[base + j]];
    return z;
}

SplineDesign tensor_design(const SplineSpec& spec, std::span<const double> X) {
    spec.validate();
    const int d = spec.dim();
    if (d < 2 || d > 3) throw UsageError("spline design supports 2 or 3 input dimensions");
    if (X.size() % static_cast<std::size_t>(d) != 0) throw UsageError("design input is not n x d");
    const std::size_t n = X.size() / d;
    const std::size_t local = static_cast<std::size_t>(spec.degree + 1);

    SplineDesign D;
    D.rows = n;
    D.features = spec.feature_count();
    D.nnz_per_row = 1;
    for (int k = 0; k < d; ++k) D.nnz_per_row *= local;
    D.cols.resize(n * D.nnz_per_row);
    D.values.resize(n * D.nnz_per_row);

    std::vector<std::vector<double>> knots;
    for (int k = 0; k < d; ++k) knots.push_back(spec.knots(k));
    std::vector<double> vals(local * d);
    std::vector<int> first(d);
    std::vector<std::size_t> stride(d);
    for (int k = d - 1; k >= 0; --k)
        stride[k] = k == d - 1 ? 1 : stride[k + 1] * static_cast<std::size_t>(spec.basis_count);

    std::vector<std::size_t> a(d);
    for (std::size_t i = 0; i < n; ++i) {
        for (int k = 0; k < d; ++k) first[k] = basis_span(spec, knots[k], X[i * d + k], vals.data() + k * local);
        std::fill(a.begin(), a.end(), 0);
        for (std::size_t j = 0; j < D.nnz_per_row; ++j) {
            std::size_t col = 0;
            double v = 1.0;
            for (int k = 0; k < d; ++k) {
                col += (static_cast<std::size_t>(first[k]) + a[k]) * stride[k];
                v *= vals[k * local + a[k]];
            }
            D.cols[i * D.nnz_per_row + j] = static_cast<std::uint32_t>(col);
            D.values[i * D.nnz_per_row + j] = v;
            for (int k = d - 1; k >= 0; --k) {
                if (++a[k] < local) break;
                a[k] = 0;
            }
        }
    }
    return D;
}

namespace {

double bce_term(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

double objective_and_gradient(const SplineSpec& spec, const SplineDesign& D, std::span<const std::uint8_t> y,
                              std::span<const double> w, std::vector<double>* grad) {
    const double n = static_cast<double>(D.rows);
    double loss = 0.0;
    if (grad) std::fill(grad->begin(), grad->end(), 0.0);
    for (std::size_t i = 0; i < D.rows; ++i) {
        const double z = D.dot(i, w);
        loss += bce_term(z, y[i]);
        if (grad) {
            const double r = (sigmoid(z) - y[i]) / n;
            const std::size_t base = i * D.nnz_per_row;
            for (std::size_t j = 0; j < D.nnz_per_row; ++j) (*grad)[D.cols[base + j]] += r * D.values[base + j];
            (*grad)[D.features] += r;
        }
    }
    loss /= n;
    double penalty = 0.0;
    for (std::size_t j = 0; j < D.features; ++j) {
        penalty += w[j] * w[j];
        if (grad) (*grad)[j] += 2.0 * spec.lambda * w[j];
    }
    return loss + spec.lambda * penalty;
}

double norm2(const std::vector<double>& g) {
    double s = 0.0;
    for (double v : g) s += v * v;
    return std::sqrt(s);
}

}  // namespace

double spline_objective(const SplineSpec& spec, const SplineDesign& design, std::span<const std::uint8_t> labels,
                        std::span<const double> w) {
    if (labels.size() != design.rows || w.size() != design.features + 1) throw UsageError("spline objective size mismatch");
    return objective_and_gradient(spec, design, labels, w, nullptr);
}

SplineFit fit_spline(const SplineSpec& spec, const PointSet& train, const SplineFitOptions& options) {
    spec.validate();
    if (train.dim != spec.dim()) throw UsageError("training set dimension does not match the spline");
    const std::size_t pos = train.count_positive();
    if (pos == 0 || pos == train.size()) throw DataError("spline fit needs both classes in the training set");

    const auto D = tensor_design(spec, train.coords);
    std::vector<double> w(D.features + 1, 0.0);
    if (options.initial) {
        if (options.initial->size() != w.size()) throw UsageError("initial coefficient length mismatch");
        w = *options.initial;
    }

    const std::size_t m = w.size();
    constexpr std::size_t memory = 10;
    std::vector<std::vector<double>> S, Y;
    std::vector<double> rho, alpha(memory);
    std::vector<double> g(m), g_new(m), dir(m), trial(m);
    double f = objective_and_gradient(spec, D, train.labels, w, &g);
    double gn = norm2(g);
    SplineFit out;
    int flat = 0;
    while (gn >= options.tolerance && out.iterations < options.max_iterations) {
        // Two-loop recursion.
        dir = g;
        for (std::size_t k = S.size(); k-- > 0;) {
            alpha[k] = rho[k] * std::inner_product(S[k].begin(), S[k].end(), dir.begin(), 0.0);
            for (std::size_t j = 0; j < m; ++j) dir[j] -= alpha[k] * Y[k][j];
        }
        double gamma = 1.0 / std::max(gn, 1.0);
        if (!S.empty()) gamma = 1.0 / (rho.back() * std::inner_product(Y.back().begin(), Y.back().end(), Y.back().begin(), 0.0));
        for (double& v : dir) v *= gamma;
        for (std::size_t k = 0; k < S.size(); ++k) {
            const double beta = rho[k] * std::inner_product(Y[k].begin(), Y[k].end(), dir.begin(), 0.0);
            for (std::size_t j = 0; j < m; ++j) dir[j] += (alpha[k] - beta) * S[k][j];
        }
        double slope = -std::inner_product(g.begin(), g.end(), dir.begin(), 0.0);
        if (!(slope < 0.0)) {
            S.clear();
            Y.clear();
            rho.clear();
            dir = g;
            for (double& v : dir) v /= std::max(gn, 1.0);
            slope = -std::inner_product(g.begin(), g.end(), dir.begin(), 0.0);
        }

        double step = 1.0, ft = 0.0;
        for (;;) {
            for (std::size_t j = 0; j < m; ++j) trial[j] = w[j] - step * dir[j];
            ft = objective_and_gradient(spec, D, train.labels, trial, nullptr);
            if (ft <= f + 1e-4 * step * slope || step < 1e-20) break;
            step *= 0.5;
        }
        if (!(ft <= f)) break;  // line search stalled
        const double f_new = objective_and_gradient(spec, D, train.labels, trial, &g_new);
        std::vector<double> s_k(m), y_k(m);
        for (std::size_t j = 0; j < m; ++j) {
            s_k[j] = trial[j] - w[j];
            y_k[j] = g_new[j] - g[j];
        }
        const double sy = std::inner_product(s_k.begin(), s_k.end(), y_k.begin(), 0.0);
        if (sy > 1e-12 * norm2(s_k) * norm2(y_k)) {
            if (S.size() == memory) {
                S.erase(S.begin());
                Y.erase(Y.begin());
                rho.erase(rho.begin());
            }
            S.push_back(std::move(s_k));
            Y.push_back(std::move(y_k));
            rho.push_back(1.0 / sy);
        }
        w.swap(trial);
        g.swap(g_new);
        // Stop once the objective no longer moves at double precision.
        flat = f - f_new <= 4 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f)) ? flat + 1 : 0;
        f = f_new;
        gn = norm2(g);
        ++out.iterations;
        if (flat >= 5) break;
    }
    for (double v : w)
        if (!std::isfinite(v)) throw NumericError("spline fit produced non-finite coefficients");
    out.model = {spec, std::move(w)};
    out.loss = f;
    out.gradient_norm = gn;
    out.converged = gn < options.tolerance;
    return out;
}

std::vector<double> predict_spline(const SplineModel& model, std::span<const double> X) {
    const auto D = tensor_design(model.spec, X);
    if (model.coefficients.size() != D.features + 1) throw UsageError("spline coefficient count mismatch");
    std::vector<double> p(D.rows);
    for (std::size_t i = 0; i < D.rows; ++i) p[i] = sigmoid(D.dot(i, model.coefficients));
    return p;
}

std::vector<double> predict_spline(const SplineModel& model, const PointSet& set) {
    if (set.dim != model.spec.dim()) throw UsageError("point dimension does not match the spline");
    return predict_spline(model, std::span<const double>(set.coords));
}

void save_spline(const SplineModel& model, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "spline degree=" << model.spec.degree << " basis=" << model.spec.basis_count
        << " lambda=" << detail::fmt17(model.spec.lambda) << " bounds=";
    for (std::size_t k = 0; k < model.spec.bounds.size(); ++k)
        out << (k ? "," : "") << detail::fmt17(model.spec.bounds[k].low) << ':' << detail::fmt17(model.spec.bounds[k].high);
    out << '\n';
    for (double c : model.coefficients) out << detail::fmt17(c) << '\n';
}

SplineModel load_spline(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open spline model " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty spline model file");
    std::istringstream head(line);
    std::string word;
    head >> word;
    if (word != "spline") throw DataError("not a spline model: " + path.string());

    SplineModel m;
    bool have_bounds = false;
    while (head >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw DataError("malformed spline header field '" + word + "'");
        const auto key = word.substr(0, eq), value = word.substr(eq + 1);
        if (key == "degree" || key == "basis") {
            const auto v = detail::parse_int(value);
            if (!v) throw DataError("bad spline " + key);
            (key == "degree" ? m.spec.degree : m.spec.basis_count) = static_cast<int>(*v);
        } else if (key == "lambda") {
            const auto v = detail::parse_double(value);
            if (!v) throw DataError("bad spline lambda");
            m.spec.lambda = *v;
        } else if (key == "bounds") {
            for (const auto& pair : detail::split(value)) {
                const auto colon = pair.find(':');
                const auto lo = detail::parse_double(pair.substr(0, colon));
                const auto hi = colon == std::string::npos ? std::nullopt : detail::parse_double(pair.substr(colon + 1));
                if (!lo || !hi) throw DataError("bad spline bounds '" + pair + "'");
                m.spec.bounds.push_back({*lo, *hi});
            }
            have_bounds = true;
        }
    }
    if (!have_bounds) throw DataError("spline model lacks bounds");
    try {
        m.spec.validate();
    } catch (const UsageError& e) {
        throw DataError(std::string("invalid spline model: ") + e.what());
    }
    while (std::getline(in, line)) {
        if (detail::trim(line).empty()) continue;
        const auto v = detail::parse_double(line);
        if (!v || !std::isfinite(*v)) throw DataError("bad spline coefficient: " + line);
        m.coefficients.push_back(*v);
    }
    if (m.coefficients.size() != m.spec.feature_count() + 1) throw DataError("spline coefficient count mismatch");
    return m;
}

}  // namespace fieldloom
