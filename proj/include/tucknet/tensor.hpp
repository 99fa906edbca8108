#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace tucknet {

using Dims = std::vector<std::int64_t>;

/// Thrown when tensor or matrix shapes do not conform.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Product of a dimension list, throwing ShapeError on overflow or on
/// empty/non-positive entries.
std::int64_t checked_volume(std::span<const std::int64_t> dims);

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::int64_t rows, std::int64_t cols);  // zero-filled
    Matrix(std::int64_t rows, std::int64_t cols, std::vector<double> data);

    static Matrix identity(std::int64_t n);

    std::int64_t rows() const { return rows_; }
    std::int64_t cols() const { return cols_; }
    std::int64_t size() const { return rows_ * cols_; }

    double operator()(std::int64_t r, std::int64_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::int64_t r, std::int64_t c) { return data_[r * cols_ + c]; }

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

private:
    std::int64_t rows_ = 0;
    std::int64_t cols_ = 0;
    std::vector<double> data_;
};

/// Dense D-way tensor of doubles.
///
/// Storage is one flat buffer in lexicographic order with the LAST index
/// varying fastest (C order). vec()/ivec() deliberately use the opposite,
/// mode-1-fastest ordering so that
///   vec(X x1 W1 ... xD WD) == (WD kron ... kron W1) * vec(X),
/// which is the ordering all Kronecker-form identities in this library
/// assume. Mode indices in the public API are 1-based.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Dims dims);  // zero-filled
    DenseTensor(Dims dims, std::vector<double> data);

    static DenseTensor constant(Dims dims, double value);

    const Dims& dims() const { return dims_; }
    int order() const { return static_cast<int>(dims_.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double operator[](std::int64_t flat) const { return data_[flat]; }
    double& operator[](std::int64_t flat) { return data_[flat]; }

    /// Multi-index access (debug/test convenience; the hot paths work on
    /// the flat buffer).
    double at(std::span<const std::int64_t> index) const;
    double& at(std::span<const std::int64_t> index);

    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }
    std::span<const double> values() const { return data_; }
    std::span<double> values() { return data_; }

    bool same_dims(const DenseTensor& other) const { return dims_ == other.dims_; }

private:
    Dims dims_;
    std::vector<double> data_;
};

// --- multilinear algebra primitives ------------------------------------

/// Mode-d unfolding X_(d): dims[d] rows, product of the remaining dims
/// columns. Columns enumerate the remaining indices with the EARLIEST
/// remaining mode varying fastest, so the unfolding is compatible with the
/// mode-1-fastest vec() above.
Matrix matricize(const DenseTensor& x, int mode);

/// Inverse of matricize: folds M back into a tensor of the given dims.
DenseTensor dematricize(const Matrix& m, int mode, const Dims& dims);

/// Mode-d product X x_d W: left-multiplies every mode-d fiber by W.
/// Result has dims[d] replaced by W.rows().
DenseTensor mode_product(const DenseTensor& x, const Matrix& w, int mode);

/// Mode-d product with W transposed (X x_d W^T) without forming the
/// transpose. This is the adjoint of mode_product in the Frobenius inner
/// product.
DenseTensor mode_product_transposed(const DenseTensor& x, const Matrix& w, int mode);

/// X x1 mats[0] x2 mats[1] ... xD mats[D-1], applied sequentially.
/// mats.size() must equal the tensor order.
DenseTensor tucker_map(const DenseTensor& x, std::span<const Matrix> mats);

/// Tucker map with every matrix transposed: the adjoint of tucker_map.
/// Equals iVec(Vec(g)^T (mats[D-1] kron ... kron mats[0])).
DenseTensor tucker_map_transposed(const DenseTensor& g, std::span<const Matrix> mats);

/// Kronecker product: (A kron B)(i*B.rows+k, j*B.cols+l) = A(i,j)*B(k,l).
Matrix kron(const Matrix& a, const Matrix& b);

/// Mode-1-fastest vectorization (see the class note on DenseTensor).
std::vector<double> vec(const DenseTensor& x);

/// Inverse of vec.
DenseTensor ivec(std::span<const double> v, const Dims& dims);

/// Entry-wise product; dims must match exactly.
DenseTensor hadamard(const DenseTensor& a, const DenseTensor& b);

/// A_(d) * B_(d)^T without materializing either unfolding. A and B must
/// agree on every mode except d. The result is independent of the column
/// ordering convention, so the natural storage enumeration is used.
Matrix unfold_product(const DenseTensor& a, const DenseTensor& b, int mode);

// --- small elementwise helpers -----------------------------------------

DenseTensor add(const DenseTensor& a, const DenseTensor& b);
DenseTensor subtract(const DenseTensor& a, const DenseTensor& b);
DenseTensor scale(const DenseTensor& a, double s);

/// y += x (shape-checked).
void accumulate(DenseTensor& y, const DenseTensor& x);
void accumulate(Matrix& y, const Matrix& x);
/// y += s * x.
void accumulate_scaled(DenseTensor& y, const DenseTensor& x, double s);
void accumulate_scaled(Matrix& y, const Matrix& x, double s);

}  // namespace tucknet
