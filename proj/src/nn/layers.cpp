#include "cromo/nn/layers.hpp"

#include "cromo/error.hpp"

#include <cmath>

namespace cromo::nn {

void Layer::collect(const std::string&, std::vector<Parameter*>&, std::vector<StateTensor>&) {}

namespace {

Mat fan_in_uniform(int rows, int cols, int fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
}

std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
}

}  // namespace

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(int in, int out, bool bias, Rng& rng) : in_(in), out_(out), has_bias_(bias) {
    require(in > 0 && out > 0, "linear: dimensions must be positive");
    weight_.name = "weight";
    weight_.value = fan_in_uniform(out, in, in, rng);
    weight_.grad = Mat::Zero(out, in);
    bias_.name = "bias";
    bias_.decay = false;
    bias_.value = has_bias_ ? fan_in_uniform(1, out, in, rng) : Mat::Zero(1, out);
    bias_.grad = Mat::Zero(1, out);
}

Mat Linear::forward(const Mat& x, Mode, Cache* cache) {
    require(x.cols() == in_, "linear: expected " + std::to_string(in_) + " input features, got " +
                                 std::to_string(x.cols()));
    if (cache) cache->saved = {x};
    Mat y = x * weight_.value.transpose();
    if (has_bias_) y.rowwise() += bias_.value.row(0);
    return y;
}

Mat Linear::backward(const Mat& grad_out, const Cache& cache) {
    const Mat& x = cache.saved.at(0);
    weight_.grad.noalias() += grad_out.transpose() * x;
    if (has_bias_) bias_.grad.row(0) += grad_out.colwise().sum();
    return grad_out * weight_.value;
}

void Linear::collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>&) {
    weight_.name = join(prefix, "weight");
    params.push_back(&weight_);
    if (has_bias_) {
        bias_.name = join(prefix, "bias");
        params.push_back(&bias_);
    }
}

// ---------------------------------------------------------------------------
// BatchNorm
// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(ImageShape shape, double momentum, double eps) : shape_(shape), momentum_(momentum), eps_(eps) {
    const int c = shape.channels;
    gamma_ = {"weight", Mat::Ones(1, c), Mat::Zero(1, c), false};
    beta_ = {"bias", Mat::Zero(1, c), Mat::Zero(1, c), false};
    running_mean_ = Mat::Zero(1, c);
    running_var_ = Mat::Ones(1, c);
}

Mat BatchNorm::forward(const Mat& x, Mode mode, Cache* cache) {
    require(x.cols() == shape_.size(), "batchnorm: input width mismatch");
    const int C = shape_.channels;
    const int P = shape_.height * shape_.width;
    const double n = static_cast<double>(x.rows()) * P;
    Mat xhat(x.rows(), x.cols());
    Mat inv_std(1, C);
    for (int c = 0; c < C; ++c) {
        auto block = x.middleCols(c * P, P);
        double mean, var;
        if (mode == Mode::kTrain) {
            require(n > 1, "batchnorm: training mode needs more than one value per channel");
            mean = block.mean();
            var = (block.array() - mean).square().sum() / n;
            running_mean_(0, c) = (1 - momentum_) * running_mean_(0, c) + momentum_ * mean;
            running_var_(0, c) = (1 - momentum_) * running_var_(0, c) + momentum_ * var * n / (n - 1);
        } else {
            mean = running_mean_(0, c);
            var = running_var_(0, c);
        }
        inv_std(0, c) = 1.0 / std::sqrt(var + eps_);
        xhat.middleCols(c * P, P) = (block.array() - mean) * inv_std(0, c);
    }
    Mat y(x.rows(), x.cols());
    for (int c = 0; c < C; ++c)
        y.middleCols(c * P, P) = (xhat.middleCols(c * P, P).array() * gamma_.value(0, c) + beta_.value(0, c)).matrix();
    if (cache) {
        Mat mode_flag(1, 1);
        mode_flag(0, 0) = mode == Mode::kTrain ? 1.0 : 0.0;
        cache->saved = {std::move(xhat), std::move(inv_std), std::move(mode_flag)};
    }
    return y;
}

Mat BatchNorm::backward(const Mat& grad_out, const Cache& cache) {
    const Mat& xhat = cache.saved.at(0);
    const Mat& inv_std = cache.saved.at(1);
    const bool train = cache.saved.at(2)(0, 0) > 0.5;
    const int C = shape_.channels;
    const int P = shape_.height * shape_.width;
    const double n = static_cast<double>(grad_out.rows()) * P;
    Mat dx(grad_out.rows(), grad_out.cols());
    for (int c = 0; c < C; ++c) {
        auto dy = grad_out.middleCols(c * P, P).array();
        auto xh = xhat.middleCols(c * P, P).array();
        const double sum_dy = dy.sum();
        const double sum_dy_xh = (dy * xh).sum();
        gamma_.grad(0, c) += sum_dy_xh;
        beta_.grad(0, c) += sum_dy;
        const double g = gamma_.value(0, c) * inv_std(0, c);
        if (train)
            dx.middleCols(c * P, P) = (g / n * (n * dy - sum_dy - xh * sum_dy_xh)).matrix();
        else
            dx.middleCols(c * P, P) = (g * dy).matrix();
    }
    return dx;
}

void BatchNorm::collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) {
    gamma_.name = join(prefix, "weight");
    beta_.name = join(prefix, "bias");
    params.push_back(&gamma_);
    params.push_back(&beta_);
    state.push_back({join(prefix, "running_mean"), &running_mean_});
    state.push_back({join(prefix, "running_var"), &running_var_});
}

// ---------------------------------------------------------------------------
// ReLU / GlobalAvgPool
// ---------------------------------------------------------------------------

Mat ReLU::forward(const Mat& x, Mode, Cache* cache) {
    Mat y = x.cwiseMax(0.0);
    if (cache) cache->saved = {x};
    return y;
}

Mat ReLU::backward(const Mat& grad_out, const Cache& cache) {
    const Mat& x = cache.saved.at(0);
    return (x.array() > 0.0).select(grad_out, 0.0);
}

Mat GlobalAvgPool::forward(const Mat& x, Mode, Cache*) {
    const int P = in_.height * in_.width;
    Mat y(x.rows(), in_.channels);
    for (int c = 0; c < in_.channels; ++c) y.col(c) = x.middleCols(c * P, P).rowwise().mean();
    return y;
}

Mat GlobalAvgPool::backward(const Mat& grad_out, const Cache&) {
    const int P = in_.height * in_.width;
    Mat dx(grad_out.rows(), in_.size());
    for (int c = 0; c < in_.channels; ++c)
        dx.middleCols(c * P, P) = (grad_out.col(c) / static_cast<double>(P)).replicate(1, P);
    return dx;
}

// ---------------------------------------------------------------------------
// Conv2d (im2col + GEMM)
// ---------------------------------------------------------------------------

Conv2d::Conv2d(ImageShape in, int out_channels, int kernel, int stride, int padding, bool bias, Rng& rng)
    : in_(in), kernel_(kernel), stride_(stride), padding_(padding), has_bias_(bias) {
    require(kernel > 0 && stride > 0 && padding >= 0, "conv2d: bad geometry");
    out_.channels = out_channels;
    out_.height = (in.height + 2 * padding - kernel) / stride + 1;
    out_.width = (in.width + 2 * padding - kernel) / stride + 1;
    require(out_.height > 0 && out_.width > 0, "conv2d: kernel larger than padded input " + in.to_string());
    const int fan_in = in.channels * kernel * kernel;
    weight_ = {"weight", fan_in_uniform(out_channels, fan_in, fan_in, rng), Mat::Zero(out_channels, fan_in), true};
    bias_ = {"bias", bias ? fan_in_uniform(1, out_channels, fan_in, rng) : Mat::Zero(1, out_channels),
             Mat::Zero(1, out_channels), false};
}

Mat Conv2d::im2col(const Mat& x) const {
    const int B = static_cast<int>(x.rows());
    const int HoWo = out_.height * out_.width;
    const int K = kernel_;
    Mat cols = Mat::Zero(static_cast<Eigen::Index>(B) * HoWo, in_.channels * K * K);
    for (int b = 0; b < B; ++b) {
        const double* img = x.row(b).data();
        for (int oy = 0; oy < out_.height; ++oy)
            for (int ox = 0; ox < out_.width; ++ox) {
                double* row = cols.row(static_cast<Eigen::Index>(b) * HoWo + oy * out_.width + ox).data();
                for (int c = 0; c < in_.channels; ++c)
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = oy * stride_ - padding_ + ky;
                        if (iy < 0 || iy >= in_.height) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = ox * stride_ - padding_ + kx;
                            if (ix < 0 || ix >= in_.width) continue;
                            row[(c * K + ky) * K + kx] = img[(c * in_.height + iy) * in_.width + ix];
                        }
                    }
            }
    }
    return cols;
}

Mat Conv2d::col2im(const Mat& cols, int batch) const {
    const int HoWo = out_.height * out_.width;
    const int K = kernel_;
    Mat dx = Mat::Zero(batch, in_.size());
    for (int b = 0; b < batch; ++b) {
        double* img = dx.row(b).data();
        for (int oy = 0; oy < out_.height; ++oy)
            for (int ox = 0; ox < out_.width; ++ox) {
                const double* row = cols.row(static_cast<Eigen::Index>(b) * HoWo + oy * out_.width + ox).data();
                for (int c = 0; c < in_.channels; ++c)
                    for (int ky = 0; ky < K; ++ky) {
                        const int iy = oy * stride_ - padding_ + ky;
                        if (iy < 0 || iy >= in_.height) continue;
                        for (int kx = 0; kx < K; ++kx) {
                            const int ix = ox * stride_ - padding_ + kx;
                            if (ix < 0 || ix >= in_.width) continue;
                            img[(c * in_.height + iy) * in_.width + ix] += row[(c * K + ky) * K + kx];
                        }
                    }
            }
    }
    return dx;
}

Mat Conv2d::forward(const Mat& x, Mode, Cache* cache) {
    require(x.cols() == in_.size(), "conv2d: expected input " + in_.to_string());
    const int B = static_cast<int>(x.rows());
    const int HoWo = out_.height * out_.width;
    Mat cols = im2col(x);
    Mat out = cols * weight_.value.transpose();  // [B*HoWo x Cout]
    if (has_bias_) out.rowwise() += bias_.value.row(0);
    Mat y(B, out_.size());
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < out_.channels; ++co)
            for (int p = 0; p < HoWo; ++p) y(b, co * HoWo + p) = out(static_cast<Eigen::Index>(b) * HoWo + p, co);
    if (cache) cache->saved = {std::move(cols)};
    return y;
}

Mat Conv2d::backward(const Mat& grad_out, const Cache& cache) {
    const Mat& cols = cache.saved.at(0);
    const int B = static_cast<int>(grad_out.rows());
    const int HoWo = out_.height * out_.width;
    Mat g(static_cast<Eigen::Index>(B) * HoWo, out_.channels);
    for (int b = 0; b < B; ++b)
        for (int co = 0; co < out_.channels; ++co)
            for (int p = 0; p < HoWo; ++p) g(static_cast<Eigen::Index>(b) * HoWo + p, co) = grad_out(b, co * HoWo + p);
    weight_.grad.noalias() += g.transpose() * cols;
    if (has_bias_) bias_.grad.row(0) += g.colwise().sum();
    return col2im(g * weight_.value, B);
}

void Conv2d::collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>&) {
    weight_.name = join(prefix, "weight");
    params.push_back(&weight_);
    if (has_bias_) {
        bias_.name = join(prefix, "bias");
        params.push_back(&bias_);
    }
}

// ---------------------------------------------------------------------------
// Sequential / Residual
// ---------------------------------------------------------------------------

Sequential::Sequential(const Sequential& other) : in_(other.in_) {
    layers_.reserve(other.layers_.size());
    for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Sequential& Sequential::operator=(const Sequential& other) {
    if (this != &other) {
        Sequential copy(other);
        *this = std::move(copy);
    }
    return *this;
}

Sequential& Sequential::add(LayerPtr layer) {
    require(layer->input_shape().size() == output_shape().size(),
            "sequential: layer '" + layer->kind() + "' expects input " + layer->input_shape().to_string() +
                " but previous output is " + output_shape().to_string());
    layers_.push_back(std::move(layer));
    return *this;
}

ImageShape Sequential::output_shape() const { return layers_.empty() ? in_ : layers_.back()->output_shape(); }

Mat Sequential::forward(const Mat& x, Mode mode, Cache* cache) {
    if (cache) cache->children.assign(layers_.size(), Cache{});
    Mat h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        h = layers_[i]->forward(h, mode, cache ? &cache->children[i] : nullptr);
    return h;
}

Mat Sequential::backward(const Mat& grad_out, const Cache& cache) {
    Mat g = grad_out;
    for (std::size_t i = layers_.size(); i-- > 0;) g = layers_[i]->backward(g, cache.children.at(i));
    return g;
}

void Sequential::collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) {
    for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->collect(join(prefix, std::to_string(i)), params, state);
}

Residual::Residual(Sequential main, Sequential shortcut) : main_(std::move(main)), shortcut_(std::move(shortcut)) {
    require(main_.output_shape().size() == shortcut_.output_shape().size(), "residual: branch shapes differ");
}

Mat Residual::forward(const Mat& x, Mode mode, Cache* cache) {
    if (cache) cache->children.assign(2, Cache{});
    Mat sum = main_.forward(x, mode, cache ? &cache->children[0] : nullptr) +
              shortcut_.forward(x, mode, cache ? &cache->children[1] : nullptr);
    if (cache) cache->saved = {sum};
    return sum.cwiseMax(0.0);
}

Mat Residual::backward(const Mat& grad_out, const Cache& cache) {
    const Mat g = (cache.saved.at(0).array() > 0.0).select(grad_out, 0.0);
    return main_.backward(g, cache.children.at(0)) + shortcut_.backward(g, cache.children.at(1));
}

void Residual::collect(const std::string& prefix, std::vector<Parameter*>& params, std::vector<StateTensor>& state) {
    main_.collect(join(prefix, "main"), params, state);
    shortcut_.collect(join(prefix, "shortcut"), params, state);
}

}  // namespace cromo::nn
