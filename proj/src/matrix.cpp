#include "podmtl/matrix.hpp"

#include <cmath>
#include <limits>

namespace podmtl {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.size() ? rows.begin()->size() : 0);
    std::size_t r = 0;
    for (const auto& row : rows) {
        if (row.size() != m.cols_) {
            throw shape_error("from_rows: ragged initializer");
        }
        std::size_t c = 0;
        for (double v : row) m(r, c++) = v;
        ++r;
    }
    return m;
}

Matrix Matrix::row_vector(const std::vector<double>& values) {
    Matrix m(1, values.size());
    for (std::size_t i = 0; i < values.size(); ++i) m[i] = values[i];
    return m;
}

Matrix Matrix::column_vector(const std::vector<double>& values) {
    Matrix m(values.size(), 1);
    for (std::size_t i = 0; i < values.size(); ++i) m[i] = values[i];
    return m;
}

Matrix Matrix::scalar(double v) {
    Matrix m(1, 1);
    m[0] = v;
    return m;
}

std::string Matrix::shape_str() const {
    return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Matrix::require_finite(const char* what) const {
    if (!all_finite()) {
        throw data_error(std::string(what) + ": non-finite entry in " + shape_str() + " matrix");
    }
}

double Matrix::l2_norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

double Matrix::abs_max() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::fabs(v));
    return m;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw shape_error("matmul: incompatible shapes " + a.shape_str() + " and " + b.shape_str());
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(n, m);
    const double* ad = a.data();
    const double* bd = b.data();
    double* cd = c.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = ad + i * k;
        double* ci = cd + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = bd + p * m;
            for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
        }
    }
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw shape_error("matmul_nt: incompatible shapes " + a.shape_str() + " and " +
                          b.shape_str() + "^T");
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    Matrix c(n, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* bj = b.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = s;
        }
    }
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw shape_error("matmul_tn: incompatible shapes " + a.shape_str() + "^T and " +
                          b.shape_str());
    }
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    Matrix c(k, m);
    for (std::size_t i = 0; i < n; ++i) {
        const double* ai = a.data() + i * k;
        const double* bi = b.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            double* cp = c.data() + p * m;
            for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
        }
    }
    return c;
}

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
    if (!a.same_shape(b)) {
        throw shape_error(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
    }
}

}  // namespace

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
    return c;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "sub");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
    return c;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "hadamard");
    Matrix c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
    return c;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    return out;
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols()) {
        throw shape_error("add_row_broadcast: bias " + bias.shape_str() + " does not match " +
                          x.shape_str());
    }
    Matrix c = x;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) c(i, j) += bias[j];
    }
    return c;
}

Matrix relu(const Matrix& x) {
    Matrix c = x;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = c[i] > 0.0 ? c[i] : 0.0;
    return c;
}

double sigmoid_scalar(double x) {
    double r;
    if (x >= 0.0) {
        const double e = std::exp(-x);
        r = 1.0 / (1.0 + e);
    } else {
        const double e = std::exp(x);
        r = e / (1.0 + e);
    }
    // keep the output strictly inside (0, 1) even in saturation
    if (r >= 1.0) r = std::nextafter(1.0, 0.0);
    if (r <= 0.0) r = std::numeric_limits<double>::min();
    return r;
}

Matrix sigmoid(const Matrix& x) {
    Matrix c = x;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = sigmoid_scalar(c[i]);
    return c;
}

void accumulate(Matrix& into, const Matrix& delta) {
    require_same_shape(into, delta, "accumulate");
    for (std::size_t i = 0; i < into.size(); ++i) into[i] += delta[i];
}

}  // namespace podmtl
