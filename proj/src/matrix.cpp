#include "ipad/matrix.hpp"

#include <cassert>

namespace ipad {

Matrix matmul(const Matrix& a, const Matrix& b) {
    assert(a.cols() == b.rows());
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const double* brow = b.row(k);
            double* orow = out.row(i);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                orow[j] += aik * brow[j];
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

void add_in_place(Matrix& y, const Matrix& x) {
    assert(y.rows() == x.rows() && y.cols() == x.cols());
    for (std::size_t i = 0; i < y.data().size(); ++i) {
        y.data()[i] += x.data()[i];
    }
}

void subtract_scaled(Matrix& y, double scale, const Matrix& x) {
    assert(y.rows() == x.rows() && y.cols() == x.cols());
    for (std::size_t i = 0; i < y.data().size(); ++i) {
        y.data()[i] -= scale * x.data()[i];
    }
}

} // namespace ipad
