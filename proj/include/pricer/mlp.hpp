#pragma once

// Dense multilayer perceptron: forward map, MSE loss, back-propagation,
// optimizers, learning-rate schedules and JSON persistence.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "pricer/sampling.hpp"

namespace pricer {

enum class Activation { ReLU, Sigmoid, LeakyReLU, Tanh, ELU, Identity };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);  // throws DomainError

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kEluAlpha = 1.0;

double activate(Activation a, double z);
// Derivative with respect to z, given z and the activation output y.
double activate_derivative(Activation a, double z, double y);

struct Layer {
    Eigen::MatrixXd weights;  // fan_out x fan_in
    Eigen::VectorXd bias;     // fan_out
    Activation activation = Activation::Identity;

    Eigen::Index fan_in() const { return weights.cols(); }
    Eigen::Index fan_out() const { return weights.rows(); }
};

class MlpModel {
public:
    std::vector<Layer> layers;
    // Fixed affine map applied to inputs before the first layer:
    // x' = (x - input_offset) * input_scale. Empty means identity.
    Eigen::VectorXd input_offset;
    Eigen::VectorXd input_scale;
    // Fixed affine map applied to the last layer's output:
    // y = z * output_scale + output_offset. Empty means identity.
    Eigen::VectorXd output_offset;
    Eigen::VectorXd output_scale;
    // Inverted dropout on hidden activations, training only.
    double dropout = 0.0;
    nlohmann::json training_meta = nlohmann::json::object();

    Eigen::Index input_size() const;
    Eigen::Index output_size() const;
    std::vector<Eigen::Index> layer_sizes() const;
    std::size_t parameter_count() const;
    bool has_input_scaling() const { return input_offset.size() > 0; }
    bool has_output_scaling() const { return output_offset.size() > 0; }

    // Throws ShapeMismatch if layers do not chain or the scaling has the
    // wrong width, FormatError on non-finite parameters.
    void validate() const;
};

enum class InitScheme { Uniform, GlorotUniform, HeUniform };

std::string_view to_string(InitScheme s);
InitScheme parse_init_scheme(std::string_view name);

inline constexpr double kUniformInitLimit = 0.05;

// layer_sizes = {inputs, hidden..., outputs}; one activation per weight
// layer. Biases start at zero. Throws DomainError on fewer than 2 sizes, a
// zero width or a wrong activation count.
MlpModel init_mlp(const std::vector<Eigen::Index>& layer_sizes, const std::vector<Activation>& activations,
                  InitScheme scheme, std::uint64_t seed);

// Convenience: `hidden` layers of `width` with one activation, Identity output.
MlpModel init_mlp(Eigen::Index inputs, Eigen::Index outputs, int hidden, Eigen::Index width,
                  Activation activation, InitScheme scheme, std::uint64_t seed);

// Inference. Both use the same per-row arithmetic (fused multiply-adds in
// ascending input order), so forward_batch row i equals forward(X.row(i))
// bit for bit. Throw ShapeMismatch on width errors.
Eigen::VectorXd forward(const MlpModel& model, const Eigen::VectorXd& x);
RowMatrix forward_batch(const MlpModel& model, const RowMatrix& x);

// Mean over all elements of (prediction - target)^2.
double loss_mse(const RowMatrix& predictions, const RowMatrix& targets);
double loss_mse(const Eigen::VectorXd& predictions, const Eigen::VectorXd& targets);

struct Gradients {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> bias;

    static Gradients zeros_like(const MlpModel& model);
};

// Gradients of loss_mse over the batch (rows of x / y) with respect to every
// weight and bias. No dropout. `loss` receives the batch loss when non-null.
Gradients backprop(const MlpModel& model, const RowMatrix& x, const RowMatrix& y, double* loss = nullptr);

// Training-path variant on column-major batches (samples are columns, inputs
// already scaled, targets in original units). Applies dropout when model.dropout > 0 and rng is given.
// Writes into `grads` (resized as needed) and returns the batch loss.
double backprop_columns(const MlpModel& model, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                        Gradients& grads, Rng* dropout_rng = nullptr);

// Applies the stored input scaling to rows (returns a copy).
RowMatrix scale_inputs(const MlpModel& model, const RowMatrix& x);

enum class OptimizerKind { SGD, Adam, RMSprop };

std::string_view to_string(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double rho = 0.9;  // RMSprop decay
    long step = 0;
    // First / second moment buffers, shaped like the parameters.
    Gradients m;
    Gradients v;

    explicit OptimizerState(OptimizerKind k = OptimizerKind::Adam) : kind(k) {}
};

// One update with learning rate lr; increments state.step.
void step(MlpModel& model, const Gradients& grads, OptimizerState& state, double lr);

struct LrSchedule {
    enum class Kind { Constant, StepDecay, ExponentialDecay, Cyclical };
    Kind kind = Kind::Constant;
    double lr = 1e-3;         // Constant; eta0 for StepDecay / ExponentialDecay
    double factor = 0.5;      // StepDecay
    long every_epochs = 10;   // StepDecay
    double lr_final = 1e-5;   // ExponentialDecay
    long total_steps = 1000;  // ExponentialDecay
    double lr_min = 1e-5;     // Cyclical
    double lr_max = 1e-3;     // Cyclical
    long cycle_steps = 200;   // Cyclical

    static LrSchedule constant(double lr);
    static LrSchedule step_decay(double lr0, double factor, long every_epochs);
    static LrSchedule exponential(double lr0, double lr_final, long total_steps);
    static LrSchedule cyclical(double lr_min, double lr_max, long cycle_steps);

    void validate() const;
    nlohmann::json to_json() const;
    static LrSchedule from_json(const nlohmann::json& j);
};

// Throws DomainError on negative indices.
double lr_at(const LrSchedule& schedule, long step_index, long steps_per_epoch);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const MlpModel& model);
MlpModel model_from_json(const nlohmann::json& j);  // throws FormatError

void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path);  // IoError / FormatError

}  // namespace pricer
