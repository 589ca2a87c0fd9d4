#include "dctcn/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "dctcn/errors.hpp"

namespace dctcn {

std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
    }
}

void Tensor::fill(double v) {
    std::fill(data_.begin(), data_.end(), v);
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void require_rank(const Tensor& x, std::size_t rank, const char* what) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_str(x.shape()));
    }
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    const Tensor* parts[] = {&a, &b};
    return concat_channels(parts);
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
    if (parts.empty()) throw ShapeError("concat_channels: no inputs");
    const Tensor& first = *parts.front();
    require_rank(first, 3, "concat_channels");
    const std::size_t batch = first.dim(0), steps = first.dim(1);
    std::size_t total = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != 3 || p->dim(0) != batch || p->dim(1) != steps) {
            throw ShapeError("concat_channels: shape mismatch " + shape_str(first.shape()) +
                             " vs " + shape_str(p->shape()));
        }
        total += p->dim(2);
    }
    Tensor out({batch, steps, total});
    auto dst = out.data();
    std::size_t pos = 0;
    for (std::size_t row = 0; row < batch * steps; ++row) {
        for (const Tensor* p : parts) {
            const std::size_t c = p->dim(2);
            auto src = p->data().subspan(row * c, c);
            std::copy(src.begin(), src.end(), dst.begin() + static_cast<std::ptrdiff_t>(pos));
            pos += c;
        }
    }
    return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
    require_rank(x, 3, "slice_channels");
    const std::size_t channels = x.dim(2);
    if (begin + count > channels) {
        throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," +
                         std::to_string(begin + count) + ") exceeds " + shape_str(x.shape()));
    }
    const std::size_t rows = x.dim(0) * x.dim(1);
    Tensor out({x.dim(0), x.dim(1), count});
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) out[r * count + c] = x[r * channels + begin + c];
    return out;
}

void accumulate_channels(Tensor& dst, const Tensor& src, std::size_t begin) {
    require_rank(dst, 3, "accumulate_channels");
    require_rank(src, 3, "accumulate_channels");
    const std::size_t channels = dst.dim(2), count = src.dim(2);
    if (src.dim(0) != dst.dim(0) || src.dim(1) != dst.dim(1) || begin + count > channels) {
        throw ShapeError("accumulate_channels: " + shape_str(src.shape()) + " into " +
                         shape_str(dst.shape()) + " at channel " + std::to_string(begin));
    }
    const std::size_t rows = dst.dim(0) * dst.dim(1);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < count; ++c) dst[r * channels + begin + c] += src[r * count + c];
}

Tensor global_mean_over_time(const Tensor& x) {
    require_rank(x, 3, "global_mean_over_time");
    std::vector<std::size_t> lengths(x.dim(0), x.dim(1));
    return global_mean_over_time(x, lengths);
}

Tensor global_mean_over_time(const Tensor& x, std::span<const std::size_t> lengths) {
    require_rank(x, 3, "global_mean_over_time");
    const std::size_t batch = x.dim(0), steps = x.dim(1), channels = x.dim(2);
    if (lengths.size() != batch) throw ShapeError("global_mean_over_time: lengths size mismatch");
    Tensor out({batch, channels});
    for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t len = lengths[b];
        if (len == 0 || len > steps)
            throw ShapeError("global_mean_over_time: invalid length " + std::to_string(len));
        for (std::size_t t = 0; t < len; ++t)
            for (std::size_t c = 0; c < channels; ++c) out[b * channels + c] += x.at(b, t, c);
        for (std::size_t c = 0; c < channels; ++c) out[b * channels + c] /= static_cast<double>(len);
    }
    return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape())
        throw ShapeError("add: " + shape_str(dst.shape()) + " vs " + shape_str(src.shape()));
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void scale_inplace(Tensor& dst, double s) {
    for (double& v : dst.data()) v *= s;
}

} // namespace dctcn
