#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dctcn {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Sequence tensors use the (batch, time, channels) layout, so the flat
/// index of (b, t, c) is (b * T + t) * C + c and the channels of one time
/// step are contiguous.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    const double& operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t b, std::size_t t, std::size_t c) {
        return data_[(b * shape_[1] + t) * shape_[2] + c];
    }
    const double& at(std::size_t b, std::size_t t, std::size_t c) const {
        return data_[(b * shape_[1] + t) * shape_[2] + c];
    }

    void fill(double v);
    bool all_finite() const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Throws ShapeError unless x has the given rank.
void require_rank(const Tensor& x, std::size_t rank, const char* what);

/// Concatenate along the last (channel) axis. a: (B,T,Ca), b: (B,T,Cb).
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor concat_channels(std::span<const Tensor* const> parts);
/// Channels [begin, begin + count) of a (B,T,C) tensor.
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
/// Adds src into channels [begin, begin + src channels) of dst.
void accumulate_channels(Tensor& dst, const Tensor& src, std::size_t begin);

/// (B,T,C) -> (B,C) mean over time.
Tensor global_mean_over_time(const Tensor& x);
/// Mean over the first lengths[b] steps of each sequence.
Tensor global_mean_over_time(const Tensor& x, std::span<const std::size_t> lengths);

void add_inplace(Tensor& dst, const Tensor& src);
void scale_inplace(Tensor& dst, double s);

} // namespace dctcn
