#include "pricer/mlp.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "pricer/dataset.hpp"
#include "pricer/errors.hpp"

namespace pricer {

namespace {

struct NamedActivation {
    Activation a;
    const char* name;
};

constexpr std::array<NamedActivation, 6> kActivationNames{{{Activation::ReLU, "relu"},
                                                           {Activation::Sigmoid, "sigmoid"},
                                                           {Activation::LeakyReLU, "leaky_relu"},
                                                           {Activation::Tanh, "tanh"},
                                                           {Activation::ELU, "elu"},
                                                           {Activation::Identity, "identity"}}};

}  // namespace

std::string_view to_string(Activation a) {
    for (const auto& n : kActivationNames) {
        if (n.a == a) return n.name;
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    for (const auto& n : kActivationNames) {
        if (name == n.name) return n.a;
    }
    throw DomainError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation a, double z) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
        case Activation::LeakyReLU: return z > 0.0 ? z : kLeakySlope * z;
        case Activation::Tanh: return std::tanh(z);
        case Activation::ELU: return z > 0.0 ? z : kEluAlpha * std::expm1(z);
        case Activation::Identity: return z;
    }
    return z;
}

double activate_derivative(Activation a, double z, double y) {
    switch (a) {
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
        case Activation::Sigmoid: return y * (1.0 - y);
        case Activation::LeakyReLU: return z > 0.0 ? 1.0 : kLeakySlope;
        case Activation::Tanh: return 1.0 - y * y;
        case Activation::ELU: return z > 0.0 ? 1.0 : y + kEluAlpha;
        case Activation::Identity: return 1.0;
    }
    return 1.0;
}

Eigen::Index MlpModel::input_size() const {
    if (layers.empty()) throw ShapeMismatch("model has no layers");
    return layers.front().fan_in();
}

Eigen::Index MlpModel::output_size() const {
    if (layers.empty()) throw ShapeMismatch("model has no layers");
    return layers.back().fan_out();
}

std::vector<Eigen::Index> MlpModel::layer_sizes() const {
    std::vector<Eigen::Index> s;
    if (layers.empty()) return s;
    s.push_back(layers.front().fan_in());
    for (const auto& l : layers) s.push_back(l.fan_out());
    return s;
}

std::size_t MlpModel::parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
    return n;
}

void MlpModel::validate() const {
    if (layers.empty()) throw ShapeMismatch("model has no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const Layer& l = layers[i];
        if (l.bias.size() != l.fan_out()) throw ShapeMismatch("layer " + std::to_string(i) + ": bias width");
        if (i > 0 && l.fan_in() != layers[i - 1].fan_out()) {
            throw ShapeMismatch("layer " + std::to_string(i) + ": fan_in does not match previous fan_out");
        }
        if (!l.weights.allFinite() || !l.bias.allFinite()) {
            throw FormatError("layer " + std::to_string(i) + ": non-finite parameters");
        }
    }
    if (input_offset.size() != input_scale.size() ||
        (input_offset.size() != 0 && input_offset.size() != input_size())) {
        throw ShapeMismatch("input scaling width does not match the first layer");
    }
    if (output_offset.size() != output_scale.size() ||
        (output_offset.size() != 0 && output_offset.size() != output_size())) {
        throw ShapeMismatch("output scaling width does not match the last layer");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw FormatError("dropout must lie in [0, 1)");
}

std::string_view to_string(InitScheme s) {
    switch (s) {
        case InitScheme::Uniform: return "uniform";
        case InitScheme::GlorotUniform: return "glorot_uniform";
        case InitScheme::HeUniform: return "he_uniform";
    }
    return "unknown";
}

InitScheme parse_init_scheme(std::string_view name) {
    if (name == "uniform") return InitScheme::Uniform;
    if (name == "glorot_uniform") return InitScheme::GlorotUniform;
    if (name == "he_uniform") return InitScheme::HeUniform;
    throw DomainError("unknown initialization '" + std::string(name) + "'");
}

MlpModel init_mlp(const std::vector<Eigen::Index>& layer_sizes, const std::vector<Activation>& activations,
                  InitScheme scheme, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw DomainError("init_mlp: need at least 2 layer sizes");
    if (activations.size() != layer_sizes.size() - 1) {
        throw DomainError("init_mlp: need one activation per weight layer");
    }
    for (auto s : layer_sizes) {
        if (s < 1) throw DomainError("init_mlp: zero-width layer");
    }
    Rng rng(seed);
    MlpModel model;
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const Eigen::Index fan_in = layer_sizes[l];
        const Eigen::Index fan_out = layer_sizes[l + 1];
        double limit = kUniformInitLimit;
        if (scheme == InitScheme::GlorotUniform) limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        if (scheme == InitScheme::HeUniform) limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        Layer layer;
        layer.weights.resize(fan_out, fan_in);
        for (Eigen::Index j = 0; j < fan_out; ++j) {
            for (Eigen::Index k = 0; k < fan_in; ++k) layer.weights(j, k) = rng.uniform(-limit, limit);
        }
        layer.bias = Eigen::VectorXd::Zero(fan_out);
        layer.activation = activations[l];
        model.layers.push_back(std::move(layer));
    }
    return model;
}

MlpModel init_mlp(Eigen::Index inputs, Eigen::Index outputs, int hidden, Eigen::Index width,
                  Activation activation, InitScheme scheme, std::uint64_t seed) {
    std::vector<Eigen::Index> sizes{inputs};
    std::vector<Activation> acts;
    for (int i = 0; i < hidden; ++i) {
        sizes.push_back(width);
        acts.push_back(activation);
    }
    sizes.push_back(outputs);
    acts.push_back(Activation::Identity);
    return init_mlp(sizes, acts, scheme, seed);
}

namespace {

void apply_activation(Activation a, double* z, std::size_t n) {
    switch (a) {
        case Activation::ReLU:
            for (std::size_t i = 0; i < n; ++i) z[i] = z[i] > 0.0 ? z[i] : 0.0;
            return;
        case Activation::LeakyReLU:
            for (std::size_t i = 0; i < n; ++i) z[i] = z[i] > 0.0 ? z[i] : kLeakySlope * z[i];
            return;
        case Activation::Identity:
            return;
        default:
            for (std::size_t i = 0; i < n; ++i) z[i] = activate(a, z[i]);
    }
}

std::size_t widest_layer(const MlpModel& model) {
    Eigen::Index w = model.input_size();
    for (const auto& l : model.layers) w = std::max(w, l.fan_out());
    return static_cast<std::size_t>(w);
}

// Evaluates up to B rows. Activations are stored unit-major: a[k * B + r].
// Every output element is acc = fma(W(j,k), a_k, acc) for k ascending, then
// acc + b_j, then the activation; the block width only changes which rows
// share a vector register, never the arithmetic of a row.
template <int B>
void forward_block(const MlpModel& model, const double* x, Eigen::Index ldx, int rows, double* out,
                   Eigen::Index ldo, std::vector<double>& cur, std::vector<double>& next) {
    const Eigen::Index in = model.input_size();
    const bool scaled = model.has_input_scaling();
    for (Eigen::Index k = 0; k < in; ++k) {
        for (int r = 0; r < B; ++r) {
            double v = r < rows ? x[r * ldx + k] : 0.0;
            if (scaled) v = (v - model.input_offset[k]) * model.input_scale[k];
            cur[static_cast<std::size_t>(k * B + r)] = v;
        }
    }
    for (const Layer& layer : model.layers) {
        const Eigen::Index fan_in = layer.fan_in();
        const Eigen::Index fan_out = layer.fan_out();
        const double* w = layer.weights.data();
        for (Eigen::Index j = 0; j < fan_out; ++j) {
            alignas(64) double acc[B] = {};
            const double* a = cur.data();
            for (Eigen::Index k = 0; k < fan_in; ++k) {
                const double wjk = w[k * fan_out + j];
                const double* ak = a + k * B;
                for (int r = 0; r < B; ++r) acc[r] = std::fma(wjk, ak[r], acc[r]);
            }
            double* dst = next.data() + j * B;
            const double bj = layer.bias[j];
            for (int r = 0; r < B; ++r) dst[r] = acc[r] + bj;
        }
        apply_activation(layer.activation, next.data(), static_cast<std::size_t>(fan_out * B));
        std::swap(cur, next);
    }
    const Eigen::Index n_out = model.output_size();
    const bool unscale = model.has_output_scaling();
    for (int r = 0; r < rows; ++r) {
        for (Eigen::Index j = 0; j < n_out; ++j) {
            double v = cur[static_cast<std::size_t>(j * B + r)];
            if (unscale) v = v * model.output_scale[j] + model.output_offset[j];
            out[r * ldo + j] = v;
        }
    }
}

constexpr int kBlockRows = 32;

}  // namespace

Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.input_size()) {
        throw ShapeMismatch("forward: input has " + std::to_string(x.size()) + " entries, model expects " +
                            std::to_string(model.input_size()));
    }
    const std::size_t width = widest_layer(model);
    std::vector<double> cur(width), next(width);
    Eigen::VectorXd out(model.output_size());
    forward_block<1>(model, x.data(), x.size(), 1, out.data(), out.size(), cur, next);
    return out;
}

RowMatrix forward_batch(const MlpModel& model, const RowMatrix& x) {
    if (x.cols() != model.input_size()) {
        throw ShapeMismatch("forward_batch: input has " + std::to_string(x.cols()) + " columns, model expects " +
                            std::to_string(model.input_size()));
    }
    RowMatrix out(x.rows(), model.output_size());
    const std::size_t width = widest_layer(model) * kBlockRows;
    std::vector<double> cur(width), next(width);
    for (Eigen::Index r0 = 0; r0 < x.rows(); r0 += kBlockRows) {
        const int rows = static_cast<int>(std::min<Eigen::Index>(kBlockRows, x.rows() - r0));
        forward_block<kBlockRows>(model, x.data() + r0 * x.cols(), x.cols(), rows, out.data() + r0 * out.cols(),
                                  out.cols(), cur, next);
    }
    return out;
}

double loss_mse(const RowMatrix& predictions, const RowMatrix& targets) {
    if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
        throw ShapeMismatch("loss_mse: prediction and target shapes differ");
    }
    if (predictions.size() == 0) throw EmptyInput("loss_mse: no samples");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

double loss_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets) {
    if (predictions.size() != targets.size()) throw ShapeMismatch("loss_mse: lengths differ");
    if (predictions.size() == 0) throw EmptyInput("loss_mse: no samples");
    return (predictions - targets).squaredNorm() / static_cast<double>(predictions.size());
}

Gradients Gradients::zeros_like(const MlpModel& model) {
    Gradients g;
    for (const auto& l : model.layers) {
        g.weights.push_back(Eigen::MatrixXd::Zero(l.fan_out(), l.fan_in()));
        g.bias.push_back(Eigen::VectorXd::Zero(l.fan_out()));
    }
    return g;
}

namespace {

void activate_matrix(Activation a, Eigen::MatrixXd& z) {
    apply_activation(a, z.data(), static_cast<std::size_t>(z.size()));
}

// dA -> dZ in place: d *= phi'(z).
void chain_derivative(Activation a, const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, Eigen::MatrixXd& d) {
    if (a == Activation::Identity) return;
    const Eigen::Index n = d.size();
    double* dp = d.data();
    const double* zp = z.data();
    const double* yp = y.data();
    for (Eigen::Index i = 0; i < n; ++i) dp[i] *= activate_derivative(a, zp[i], yp[i]);
}

}  // namespace

double backprop_columns(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, Gradients& grads,
                        Rng* dropout_rng) {
    const std::size_t L = model.layers.size();
    if (x.rows() != model.input_size() || y.rows() != model.output_size() || x.cols() != y.cols()) {
        throw ShapeMismatch("backprop: batch shape does not match the model");
    }
    if (x.cols() == 0) throw EmptyInput("backprop: empty batch");
    const bool drop = model.dropout > 0.0 && dropout_rng != nullptr;
    const double keep = 1.0 - model.dropout;

    // a holds the activation outputs; fed the (possibly dropped) values that
    // the next layer actually consumed.
    std::vector<Eigen::MatrixXd> z(L), a(L), mask(drop ? L : 0), fed(drop ? L : 0);
    const Eigen::MatrixXd* in = &x;
    for (std::size_t l = 0; l < L; ++l) {
        const Layer& layer = model.layers[l];
        z[l].noalias() = layer.weights * *in;
        z[l].colwise() += layer.bias;
        a[l] = z[l];
        activate_matrix(layer.activation, a[l]);
        if (drop && l + 1 < L) {
            mask[l].resize(a[l].rows(), a[l].cols());
            for (Eigen::Index i = 0; i < mask[l].size(); ++i) {
                mask[l].data()[i] = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
            }
            fed[l] = a[l].cwiseProduct(mask[l]);
            in = &fed[l];
        } else {
            in = &a[l];
        }
    }

    const double n = static_cast<double>(y.size());
    Eigen::MatrixXd delta;
    if (model.has_output_scaling()) {
        delta = ((a[L - 1].array().colwise() * model.output_scale.array()).colwise() + model.output_offset.array())
                    .matrix() -
                y;
    } else {
        delta = a[L - 1] - y;
    }
    const double loss = delta.squaredNorm() / n;
    delta *= 2.0 / n;
    if (model.has_output_scaling()) delta.array().colwise() *= model.output_scale.array();

    if (grads.weights.size() != L) grads = Gradients::zeros_like(model);
    for (std::size_t l = L; l-- > 0;) {
        const Layer& layer = model.layers[l];
        chain_derivative(layer.activation, z[l], a[l], delta);
        const Eigen::MatrixXd& input = l == 0 ? x : (drop ? fed[l - 1] : a[l - 1]);
        grads.weights[l].noalias() = delta * input.transpose();
        grads.bias[l] = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd up = layer.weights.transpose() * delta;
            if (drop) up = up.cwiseProduct(mask[l - 1]);
            delta = std::move(up);
        }
    }
    return loss;
}

RowMatrix scale_inputs(const MlpModel& model, const RowMatrix& x) {
    if (!model.has_input_scaling()) return x;
    if (x.cols() != model.input_offset.size()) throw ShapeMismatch("scale_inputs: width mismatch");
    RowMatrix out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index k = 0; k < x.cols(); ++k) {
            out(r, k) = (x(r, k) - model.input_offset[k]) * model.input_scale[k];
        }
    }
    return out;
}

Gradients backprop(const MlpModel& model, const RowMatrix& x, const RowMatrix& y, double* loss) {
    if (x.cols() != model.input_size()) throw ShapeMismatch("backprop: input width does not match the model");
    if (y.cols() != model.output_size()) throw ShapeMismatch("backprop: target width does not match the model");
    if (x.rows() != y.rows()) throw ShapeMismatch("backprop: input and target row counts differ");
    const Eigen::MatrixXd xt = scale_inputs(model, x).transpose();
    const Eigen::MatrixXd yt = y.transpose();
    Gradients g = Gradients::zeros_like(model);
    const double l = backprop_columns(model, xt, yt, g, nullptr);
    if (loss) *loss = l;
    return g;
}

std::string_view to_string(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::SGD: return "sgd";
        case OptimizerKind::Adam: return "adam";
        case OptimizerKind::RMSprop: return "rmsprop";
    }
    return "unknown";
}

OptimizerKind parse_optimizer(std::string_view name) {
    if (name == "sgd") return OptimizerKind::SGD;
    if (name == "adam") return OptimizerKind::Adam;
    if (name == "rmsprop") return OptimizerKind::RMSprop;
    throw DomainError("unknown optimizer '" + std::string(name) + "'");
}

namespace {

template <typename Param, typename Grad, typename Buf>
void update(OptimizerState& s, Param& p, const Grad& g, Buf& m, Buf& v, double lr, double bc1, double bc2) {
    switch (s.kind) {
        case OptimizerKind::SGD:
            p -= lr * g;
            return;
        case OptimizerKind::Adam:
            m = s.beta1 * m + (1.0 - s.beta1) * g;
            v = s.beta2 * v + (1.0 - s.beta2) * g.cwiseAbs2();
            p.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.epsilon);
            return;
        case OptimizerKind::RMSprop:
            v = s.rho * v + (1.0 - s.rho) * g.cwiseAbs2();
            p.array() -= lr * g.array() / (v.array().sqrt() + s.epsilon);
            return;
    }
}

}  // namespace

void step(MlpModel& model, const Gradients& grads, OptimizerState& state, double lr) {
    const std::size_t L = model.layers.size();
    if (grads.weights.size() != L || grads.bias.size() != L) throw ShapeMismatch("step: gradient layer count");
    for (std::size_t l = 0; l < L; ++l) {
        if (grads.weights[l].rows() != model.layers[l].weights.rows() ||
            grads.weights[l].cols() != model.layers[l].weights.cols() ||
            grads.bias[l].size() != model.layers[l].bias.size()) {
            throw ShapeMismatch("step: gradient shape differs in layer " + std::to_string(l));
        }
    }
    if (state.kind != OptimizerKind::SGD && state.m.weights.size() != L) {
        state.m = Gradients::zeros_like(model);
        state.v = Gradients::zeros_like(model);
    }
    const double t = static_cast<double>(state.step + 1);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t l = 0; l < L; ++l) {
        Layer& layer = model.layers[l];
        if (state.kind == OptimizerKind::SGD) {
            layer.weights -= lr * grads.weights[l];
            layer.bias -= lr * grads.bias[l];
        } else {
            update(state, layer.weights, grads.weights[l], state.m.weights[l], state.v.weights[l], lr, bc1, bc2);
            update(state, layer.bias, grads.bias[l], state.m.bias[l], state.v.bias[l], lr, bc1, bc2);
        }
    }
    ++state.step;
}

LrSchedule LrSchedule::constant(double lr) {
    LrSchedule s;
    s.kind = Kind::Constant;
    s.lr = lr;
    return s;
}

LrSchedule LrSchedule::step_decay(double lr0, double factor, long every_epochs) {
    LrSchedule s;
    s.kind = Kind::StepDecay;
    s.lr = lr0;
    s.factor = factor;
    s.every_epochs = every_epochs;
    return s;
}

LrSchedule LrSchedule::exponential(double lr0, double lr_final, long total_steps) {
    LrSchedule s;
    s.kind = Kind::ExponentialDecay;
    s.lr = lr0;
    s.lr_final = lr_final;
    s.total_steps = total_steps;
    return s;
}

LrSchedule LrSchedule::cyclical(double lr_min, double lr_max, long cycle_steps) {
    LrSchedule s;
    s.kind = Kind::Cyclical;
    s.lr_min = lr_min;
    s.lr_max = lr_max;
    s.cycle_steps = cycle_steps;
    return s;
}

void LrSchedule::validate() const {
    switch (kind) {
        case Kind::Constant:
            if (!(lr > 0.0)) throw DomainError("schedule: lr must be positive");
            break;
        case Kind::StepDecay:
            if (!(lr > 0.0) || !(factor > 0.0) || every_epochs < 1) {
                throw DomainError("schedule: step decay needs lr > 0, factor > 0, every >= 1");
            }
            break;
        case Kind::ExponentialDecay:
            if (!(lr > 0.0) || !(lr_final > 0.0) || total_steps < 1) {
                throw DomainError("schedule: exponential decay needs positive rates and total_steps >= 1");
            }
            break;
        case Kind::Cyclical:
            if (!(lr_min > 0.0) || !(lr_min <= lr_max) || cycle_steps < 2) {
                throw DomainError("schedule: cyclical needs 0 < lr_min <= lr_max and cycle >= 2");
            }
            break;
    }
}

nlohmann::json LrSchedule::to_json() const {
    switch (kind) {
        case Kind::Constant: return {{"kind", "constant"}, {"lr", lr}};
        case Kind::StepDecay:
            return {{"kind", "step_decay"}, {"lr", lr}, {"factor", factor}, {"every_epochs", every_epochs}};
        case Kind::ExponentialDecay:
            return {{"kind", "exponential_decay"}, {"lr", lr}, {"lr_final", lr_final}, {"total_steps", total_steps}};
        case Kind::Cyclical:
            return {{"kind", "cyclical"}, {"lr_min", lr_min}, {"lr_max", lr_max}, {"cycle_steps", cycle_steps}};
    }
    return {};
}

LrSchedule LrSchedule::from_json(const nlohmann::json& j) {
    const std::string kind = j.value("kind", "constant");
    LrSchedule s;
    if (kind == "constant") {
        s = constant(j.value("lr", 1e-3));
    } else if (kind == "step_decay") {
        s = step_decay(j.value("lr", 1e-3), j.value("factor", 0.5), j.value("every_epochs", 10L));
    } else if (kind == "exponential_decay") {
        s = exponential(j.value("lr", 1e-3), j.value("lr_final", 1e-5), j.value("total_steps", 1000L));
    } else if (kind == "cyclical") {
        s = cyclical(j.value("lr_min", 1e-5), j.value("lr_max", 1e-3), j.value("cycle_steps", 200L));
    } else {
        throw DomainError("unknown schedule kind '" + kind + "'");
    }
    s.validate();
    return s;
}

double lr_at(const LrSchedule& s, long step_index, long steps_per_epoch) {
    if (step_index < 0 || steps_per_epoch < 1) throw DomainError("lr_at: negative step or empty epoch");
    switch (s.kind) {
        case LrSchedule::Kind::Constant: return s.lr;
        case LrSchedule::Kind::StepDecay:
            return s.lr * std::pow(s.factor, static_cast<double>((step_index / steps_per_epoch) / s.every_epochs));
        case LrSchedule::Kind::ExponentialDecay: {
            const double frac =
                std::min(static_cast<double>(step_index) / static_cast<double>(s.total_steps), 1.0);
            return s.lr * std::pow(s.lr_final / s.lr, frac);
        }
        case LrSchedule::Kind::Cyclical: {
            const double half = static_cast<double>(s.cycle_steps) / 2.0;
            const double pos = static_cast<double>(step_index % s.cycle_steps);
            const double frac = pos <= half ? pos / half : (static_cast<double>(s.cycle_steps) - pos) / half;
            return s.lr_min + (s.lr_max - s.lr_min) * frac;
        }
    }
    return s.lr;
}

nlohmann::json model_to_json(const MlpModel& model) {
    model.validate();
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["layer_sizes"] = model.layer_sizes();
    nlohmann::json acts = nlohmann::json::array();
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (const auto& l : model.layers) {
        acts.push_back(std::string(to_string(l.activation)));
        nlohmann::json w = nlohmann::json::array();
        for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
            std::vector<double> row(static_cast<std::size_t>(l.weights.cols()));
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) row[static_cast<std::size_t>(c)] = l.weights(r, c);
            w.push_back(std::move(row));
        }
        weights.push_back(std::move(w));
        biases.push_back(std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size()));
    }
    j["activations"] = acts;
    j["weights"] = weights;
    j["biases"] = biases;
    if (model.has_input_scaling()) {
        j["input_offset"] = std::vector<double>(model.input_offset.data(), model.input_offset.data() + model.input_offset.size());
        j["input_scale"] = std::vector<double>(model.input_scale.data(), model.input_scale.data() + model.input_scale.size());
    }
    if (model.has_output_scaling()) {
        j["output_offset"] = std::vector<double>(model.output_offset.data(), model.output_offset.data() + model.output_offset.size());
        j["output_scale"] = std::vector<double>(model.output_scale.data(), model.output_scale.data() + model.output_scale.size());
    }
    j["dropout"] = model.dropout;
    j["training_meta"] = model.training_meta;
    return j;
}

namespace {

Eigen::VectorXd vector_from_json(const nlohmann::json& j, Eigen::Index expected, const std::string& what) {
    const auto v = j.get<std::vector<double>>();
    if (static_cast<Eigen::Index>(v.size()) != expected) throw FormatError("model file: " + what + " has wrong length");
    return Eigen::Map<const Eigen::VectorXd>(v.data(), expected);
}

}  // namespace

MlpModel model_from_json(const nlohmann::json& j) {
    try {
        if (!j.is_object()) throw FormatError("model file: not a JSON object");
        if (j.value("format_version", -1) != kModelFormatVersion) {
            throw FormatError("model file: unsupported format_version");
        }
        const auto sizes = j.at("layer_sizes").get<std::vector<Eigen::Index>>();
        const auto& acts = j.at("activations");
        const auto& weights = j.at("weights");
        const auto& biases = j.at("biases");
        if (sizes.size() < 2 || acts.size() != sizes.size() - 1 || weights.size() != sizes.size() - 1 ||
            biases.size() != sizes.size() - 1) {
            throw FormatError("model file: layer counts are inconsistent");
        }
        MlpModel model;
        for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
            Layer layer;
            layer.activation = parse_activation(acts[l].get<std::string>());
            const Eigen::Index rows = sizes[l + 1];
            const Eigen::Index cols = sizes[l];
            const auto& w = weights[l];
            if (static_cast<Eigen::Index>(w.size()) != rows) throw FormatError("model file: weight rows mismatch");
            layer.weights.resize(rows, cols);
            for (Eigen::Index r = 0; r < rows; ++r) {
                const auto row = w[static_cast<std::size_t>(r)].get<std::vector<double>>();
                if (static_cast<Eigen::Index>(row.size()) != cols) throw FormatError("model file: weight cols mismatch");
                for (Eigen::Index c = 0; c < cols; ++c) layer.weights(r, c) = row[static_cast<std::size_t>(c)];
            }
            layer.bias = vector_from_json(biases[l], rows, "bias");
            model.layers.push_back(std::move(layer));
        }
        if (j.contains("input_offset")) {
            model.input_offset = vector_from_json(j.at("input_offset"), sizes.front(), "input_offset");
            model.input_scale = vector_from_json(j.at("input_scale"), sizes.front(), "input_scale");
        }
        if (j.contains("output_offset")) {
            model.output_offset = vector_from_json(j.at("output_offset"), sizes.back(), "output_offset");
            model.output_scale = vector_from_json(j.at("output_scale"), sizes.back(), "output_scale");
        }
        model.dropout = j.value("dropout", 0.0);
        model.training_meta = j.value("training_meta", nlohmann::json::object());
        model.validate();
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("model file: ") + e.what());
    } catch (const ShapeMismatch& e) {
        throw FormatError(std::string("model file: ") + e.what());
    } catch (const DomainError& e) {
        throw FormatError(std::string("model file: ") + e.what());
    }
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
    write_file_atomic(path, model_to_json(model).dump() + "\n");
}

MlpModel load_model(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("model file '" + path.string() + "': " + e.what());
    }
    return model_from_json(j);
}

}  // namespace pricer
