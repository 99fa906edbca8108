#include "tucknet/tensor.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <sstream>
#include <utility>

namespace tucknet {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<RowMat>;
using CMapRM = Eigen::Map<const RowMat>;
using DynStride = Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>;
using SMapRM = Eigen::Map<RowMat, 0, DynStride>;
using CSMapRM = Eigen::Map<const RowMat, 0, DynStride>;

std::string dims_str(std::span<const std::int64_t> dims) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) os << ',';
        os << dims[i];
    }
    os << ']';
    return os.str();
}

// 1-based public mode -> 0-based internal axis.
int check_mode(const Dims& dims, int mode) {
    if (mode < 1 || mode > static_cast<int>(dims.size())) {
        std::ostringstream os;
        os << "mode " << mode << " out of range for order-" << dims.size() << " tensor";
        throw ShapeError(os.str());
    }
    return mode - 1;
}

struct ModeView {
    std::int64_t outer;  // product of dims before the axis
    std::int64_t n;      // dims[axis]
    std::int64_t inner;  // product of dims after the axis
};

ModeView mode_view(const Dims& dims, int axis) {
    ModeView v{1, dims[axis], 1};
    for (int k = 0; k < axis; ++k) v.outer *= dims[k];
    for (int k = axis + 1; k < static_cast<int>(dims.size()); ++k) v.inner *= dims[k];
    return v;
}

// Middle-mode products go through strided maps when the trailing block is
// small; otherwise per-outer-slice GEMMs on contiguous blocks win.
constexpr std::int64_t kStridedInnerLimit = 8;

// When the mapped mode itself is tiny, the per-slice GEMMs degenerate into
// call overhead; a hand loop of contiguous axpy rows streams the operand
// once and lets the compiler vectorize the inner run.
constexpr std::int64_t kTinyModeLimit = 8;

DenseTensor mode_product_impl(const DenseTensor& x, const Matrix& w, int mode, bool transposed) {
    const int axis = check_mode(x.dims(), mode);
    const std::int64_t from = transposed ? w.rows() : w.cols();
    const std::int64_t to = transposed ? w.cols() : w.rows();
    if (x.dims()[axis] != from) {
        std::ostringstream os;
        os << "mode-" << mode << " product: matrix maps size " << from << " but tensor "
           << dims_str(x.dims()) << " has size " << x.dims()[axis] << " on that mode";
        throw ShapeError(os.str());
    }
    Dims out_dims = x.dims();
    out_dims[axis] = to;
    DenseTensor y(std::move(out_dims));

    const auto [outer, n, inner] = mode_view(x.dims(), axis);
    CMapRM wm(w.data(), w.rows(), w.cols());

    if (outer == 1) {
        CMapRM xin(x.data(), n, inner);
        MapRM yout(y.data(), to, inner);
        if (transposed)
            yout.noalias() = wm.transpose() * xin;
        else
            yout.noalias() = wm * xin;
    } else if (inner == 1) {
        CMapRM xin(x.data(), outer, n);
        MapRM yout(y.data(), outer, to);
        if (transposed)
            yout.noalias() = xin * wm;
        else
            yout.noalias() = xin * wm.transpose();
    } else if (inner <= kStridedInnerLimit) {
        for (std::int64_t i = 0; i < inner; ++i) {
            CSMapRM xi(x.data() + i, outer, n, DynStride(n * inner, inner));
            SMapRM yi(y.data() + i, outer, to, DynStride(to * inner, inner));
            if (transposed)
                yi.noalias() = xi * wm;
            else
                yi.noalias() = xi * wm.transpose();
        }
    } else if (n <= kTinyModeLimit && to <= kTinyModeLimit) {
        const double* wd = w.data();
        for (std::int64_t o = 0; o < outer; ++o) {
            const double* xo = x.data() + o * n * inner;
            double* yo = y.data() + o * to * inner;
            for (std::int64_t r = 0; r < to; ++r) {
                double* dst = yo + r * inner;  // starts zeroed
                for (std::int64_t q = 0; q < n; ++q) {
                    const double c = transposed ? wd[q * to + r] : wd[r * n + q];
                    const double* src = xo + q * inner;
                    for (std::int64_t j = 0; j < inner; ++j) dst[j] += c * src[j];
                }
            }
        }
    } else {
        for (std::int64_t o = 0; o < outer; ++o) {
            CMapRM xo(x.data() + o * n * inner, n, inner);
            MapRM yo(y.data() + o * to * inner, to, inner);
            if (transposed)
                yo.noalias() = wm.transpose() * xo;
            else
                yo.noalias() = wm * xo;
        }
    }
    return y;
}

}  // namespace

std::int64_t checked_volume(std::span<const std::int64_t> dims) {
    if (dims.empty()) throw ShapeError("tensor must have at least one mode");
    std::int64_t p = 1;
    for (auto d : dims) {
        if (d < 1) throw ShapeError("every dimension must be >= 1, got " + dims_str(dims));
        if (p > std::numeric_limits<std::int64_t>::max() / d)
            throw ShapeError("dimension product overflows: " + dims_str(dims));
        p *= d;
    }
    return p;
}

Matrix::Matrix(std::int64_t rows, std::int64_t cols)
    : rows_(rows), cols_(cols), data_(static_cast<std::size_t>(checked_volume(Dims{rows, cols}))) {}

Matrix::Matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (checked_volume(Dims{rows, cols}) != static_cast<std::int64_t>(data_.size()))
        throw ShapeError("matrix data length does not match rows*cols");
}

Matrix Matrix::identity(std::int64_t n) {
    Matrix m(n, n);
    for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

DenseTensor::DenseTensor(Dims dims)
    : dims_(std::move(dims)), data_(static_cast<std::size_t>(checked_volume(dims_))) {}

DenseTensor::DenseTensor(Dims dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
    if (checked_volume(dims_) != static_cast<std::int64_t>(data_.size()))
        throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                         " does not match dims " + dims_str(dims_));
}

DenseTensor DenseTensor::constant(Dims dims, double value) {
    DenseTensor t(std::move(dims));
    for (auto& v : t.data_) v = value;
    return t;
}

double DenseTensor::at(std::span<const std::int64_t> index) const {
    return const_cast<DenseTensor*>(this)->at(index);
}

double& DenseTensor::at(std::span<const std::int64_t> index) {
    if (index.size() != dims_.size()) throw ShapeError("index order mismatch");
    std::int64_t flat = 0;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (index[k] < 0 || index[k] >= dims_[k]) throw ShapeError("index out of range");
        flat = flat * dims_[k] + index[k];
    }
    return data_[flat];
}

Matrix matricize(const DenseTensor& x, int mode) {
    const int axis = check_mode(x.dims(), mode);
    const Dims& dims = x.dims();
    const int order = x.order();
    const std::int64_t rows = dims[axis];
    const std::int64_t cols = x.size() / rows;
    Matrix m(rows, cols);

    // Column strides: earliest remaining mode varies fastest.
    std::vector<std::int64_t> col_stride(order, 0);
    std::int64_t s = 1;
    for (int k = 0; k < order; ++k) {
        if (k == axis) continue;
        col_stride[k] = s;
        s *= dims[k];
    }

    std::vector<std::int64_t> idx(order, 0);
    const std::int64_t total = x.size();
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t col = 0;
        for (int k = 0; k < order; ++k)
            if (k != axis) col += idx[k] * col_stride[k];
        m(idx[axis], col) = x[flat];
        for (int k = order - 1; k >= 0; --k) {  // odometer, last index fastest
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return m;
}

DenseTensor dematricize(const Matrix& m, int mode, const Dims& dims) {
    const int axis = check_mode(dims, mode);
    const std::int64_t total = checked_volume(dims);
    if (m.rows() != dims[axis] || m.cols() != total / dims[axis])
        throw ShapeError("dematricize: matrix is " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()) + ", incompatible with dims " + dims_str(dims) +
                         " on mode " + std::to_string(mode));
    const int order = static_cast<int>(dims.size());
    std::vector<std::int64_t> col_stride(order, 0);
    std::int64_t s = 1;
    for (int k = 0; k < order; ++k) {
        if (k == axis) continue;
        col_stride[k] = s;
        s *= dims[k];
    }
    DenseTensor x(dims);
    std::vector<std::int64_t> idx(order, 0);
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t col = 0;
        for (int k = 0; k < order; ++k)
            if (k != axis) col += idx[k] * col_stride[k];
        x[flat] = m(idx[axis], col);
        for (int k = order - 1; k >= 0; --k) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return x;
}

DenseTensor mode_product(const DenseTensor& x, const Matrix& w, int mode) {
    return mode_product_impl(x, w, mode, /*transposed=*/false);
}

DenseTensor mode_product_transposed(const DenseTensor& x, const Matrix& w, int mode) {
    return mode_product_impl(x, w, mode, /*transposed=*/true);
}

DenseTensor tucker_map(const DenseTensor& x, std::span<const Matrix> mats) {
    if (static_cast<int>(mats.size()) != x.order())
        throw ShapeError("tucker_map: expected one matrix per mode");
    DenseTensor y = x;
    for (int d = 0; d < static_cast<int>(mats.size()); ++d)
        y = mode_product(y, mats[d], d + 1);
    return y;
}

DenseTensor tucker_map_transposed(const DenseTensor& g, std::span<const Matrix> mats) {
    if (static_cast<int>(mats.size()) != g.order())
        throw ShapeError("tucker_map_transposed: expected one matrix per mode");
    DenseTensor y = g;
    for (int d = 0; d < static_cast<int>(mats.size()); ++d)
        y = mode_product_transposed(y, mats[d], d + 1);
    return y;
}

Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
    for (std::int64_t i = 0; i < a.rows(); ++i)
        for (std::int64_t j = 0; j < a.cols(); ++j) {
            const double aij = a(i, j);
            for (std::int64_t r = 0; r < b.rows(); ++r)
                for (std::int64_t c = 0; c < b.cols(); ++c)
                    k(i * b.rows() + r, j * b.cols() + c) = aij * b(r, c);
        }
    return k;
}

std::vector<double> vec(const DenseTensor& x) {
    const Dims& dims = x.dims();
    const int order = x.order();
    std::vector<double> out(static_cast<std::size_t>(x.size()));
    // Mode-1-fastest strides.
    std::vector<std::int64_t> vstride(order);
    std::int64_t s = 1;
    for (int k = 0; k < order; ++k) {
        vstride[k] = s;
        s *= dims[k];
    }
    std::vector<std::int64_t> idx(order, 0);
    for (std::int64_t flat = 0; flat < x.size(); ++flat) {
        std::int64_t v = 0;
        for (int k = 0; k < order; ++k) v += idx[k] * vstride[k];
        out[v] = x[flat];
        for (int k = order - 1; k >= 0; --k) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return out;
}

DenseTensor ivec(std::span<const double> v, const Dims& dims) {
    const std::int64_t total = checked_volume(dims);
    if (total != static_cast<std::int64_t>(v.size()))
        throw ShapeError("ivec: length " + std::to_string(v.size()) + " does not match dims " +
                         dims_str(dims));
    const int order = static_cast<int>(dims.size());
    std::vector<std::int64_t> vstride(order);
    std::int64_t s = 1;
    for (int k = 0; k < order; ++k) {
        vstride[k] = s;
        s *= dims[k];
    }
    DenseTensor x(dims);
    std::vector<std::int64_t> idx(order, 0);
    for (std::int64_t flat = 0; flat < total; ++flat) {
        std::int64_t vi = 0;
        for (int k = 0; k < order; ++k) vi += idx[k] * vstride[k];
        x[flat] = v[vi];
        for (int k = order - 1; k >= 0; --k) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
    return x;
}

DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b) {
    if (!a.same_dims(b))
        throw ShapeError("hadamard: dims " + dims_str(a.dims()) + " vs " + dims_str(b.dims()));
    DenseTensor y(a.dims());
    const std::int64_t n = a.size();
    for (std::int64_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
    return y;
}

Matrix unfold_product(const DenseTensor& a, const DenseTensor& b, int mode) {
    const int axis = check_mode(a.dims(), mode);
    if (a.order() != b.order())
        throw ShapeError("unfold_product: order mismatch");
    for (int k = 0; k < a.order(); ++k)
        if (k != axis && a.dims()[k] != b.dims()[k])
            throw ShapeError("unfold_product: dims " + dims_str(a.dims()) + " vs " +
                             dims_str(b.dims()) + " differ off mode " + std::to_string(mode));

    const auto [outer, na, inner] = mode_view(a.dims(), axis);
    const std::int64_t nb = b.dims()[axis];
    Matrix res(na, nb);
    MapRM rm(res.data(), na, nb);

    if (outer == 1) {
        CMapRM am(a.data(), na, inner), bm(b.data(), nb, inner);
        rm.noalias() = am * bm.transpose();
    } else if (inner == 1) {
        CMapRM am(a.data(), outer, na), bm(b.data(), outer, nb);
        rm.noalias() = am.transpose() * bm;
    } else if (inner <= kStridedInnerLimit) {
        rm.setZero();
        for (std::int64_t i = 0; i < inner; ++i) {
            CSMapRM ai(a.data() + i, outer, na, DynStride(na * inner, inner));
            CSMapRM bi(b.data() + i, outer, nb, DynStride(nb * inner, inner));
            rm.noalias() += ai.transpose() * bi;
        }
    } else {
        rm.setZero();
        for (std::int64_t o = 0; o < outer; ++o) {
            CMapRM ao(a.data() + o * na * inner, na, inner);
            CMapRM bo(b.data() + o * nb * inner, nb, inner);
            rm.noalias() += ao * bo.transpose();
        }
    }
    return res;
}

namespace {
void check_same(const DenseTensor& a, const DenseTensor& b, const char* what) {
    if (!a.same_dims(b))
        throw ShapeError(std::string(what) + ": dims " + dims_str(a.dims()) + " vs " +
                         dims_str(b.dims()));
}
}  // namespace

DenseTensor add(const DenseTensor& a, const DenseTensor& b) {
    check_same(a, b, "add");
    DenseTensor y(a.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
    return y;
}

DenseTensor subtract(const DenseTensor& a, const DenseTensor& b) {
    check_same(a, b, "subtract");
    DenseTensor y(a.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = a[i] - b[i];
    return y;
}

DenseTensor scale(const DenseTensor& a, double s) {
    DenseTensor y(a.dims());
    for (std::int64_t i = 0; i < a.size(); ++i) y[i] = a[i] * s;
    return y;
}

void accumulate(DenseTensor& y, const DenseTensor& x) {
    check_same(y, x, "accumulate");
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] += x[i];
}

void accumulate(Matrix& y, const Matrix& x) {
    if (y.rows() != x.rows() || y.cols() != x.cols()) throw ShapeError("accumulate: matrix shape");
    double* yd = y.data();
    const double* xd = x.data();
    for (std::int64_t i = 0; i < y.size(); ++i) yd[i] += xd[i];
}

void accumulate_scaled(DenseTensor& y, const DenseTensor& x, double s) {
    check_same(y, x, "accumulate_scaled");
    for (std::int64_t i = 0; i < y.size(); ++i) y[i] += s * x[i];
}

void accumulate_scaled(Matrix& y, const Matrix& x, double s) {
    if (y.rows() != x.rows() || y.cols() != x.cols())
        throw ShapeError("accumulate_scaled: matrix shape");
    double* yd = y.data();
    const double* xd = x.data();
    for (std::int64_t i = 0; i < y.size(); ++i) yd[i] += s * xd[i];
}

}  // namespace tucknet
