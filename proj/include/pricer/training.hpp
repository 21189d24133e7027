#pragma once

// Training loop, evaluation metrics, k-fold cross-validation, random
// hyperparameter search, learning-rate range test and the data-size study.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "pricer/dataset.hpp"
#include "pricer/mlp.hpp"

namespace pricer {

struct Architecture {
    int hidden_layers = 4;
    Eigen::Index neurons = 400;
    Activation activation = Activation::ReLU;
    InitScheme init = InitScheme::GlorotUniform;
    double dropout = 0.0;

    void validate() const;
    MlpModel build(Eigen::Index inputs, Eigen::Index outputs, std::uint64_t seed) const;
    nlohmann::json to_json() const;
    static Architecture from_json(const nlohmann::json& j);
};

struct TrainConfig {
    int epochs = 200;
    Eigen::Index batch_size = 1024;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double rho = 0.9;
    // An ExponentialDecay with total_steps <= 0 spans the whole run.
    LrSchedule schedule = LrSchedule::exponential(1e-3, 1e-5, 0);
    std::uint64_t seed = 0;
    bool shuffle = true;
    // Fit a mean / standard-deviation input map on the training rows when
    // the model has none yet.
    bool standardize_inputs = true;
    // Same for the outputs: the last layer learns standardized targets.
    bool standardize_outputs = true;
    // Held out of the training rows when train() gets no validation set.
    double validation_fraction = 0.1;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Schedule with a run-length ExponentialDecay resolved to total_steps.
LrSchedule resolve_schedule(const LrSchedule& schedule, long total_steps);

struct TrainHistory {
    std::vector<double> train_loss;  // per epoch, mean over the epoch's batches
    std::vector<double> val_loss;    // per epoch, NaN without validation data
    std::vector<double> lr;          // per step
    std::vector<double> epoch_seconds;
    long steps_per_epoch = 0;

    // Columns epoch, train_loss, val_loss, lr (lr of the epoch's last step).
    std::string to_csv() const;
};

struct TrainResult {
    MlpModel model;
    TrainHistory history;
};

// Called after every epoch with (epoch, train_loss, val_loss).
using EpochCallback = std::function<void(int, double, double)>;

// Mini-batch training. Inputs / outputs are the datasets' input / output
// columns. Throws ShapeMismatch, and NonFiniteLoss with the global step index
// when a batch loss is NaN or infinite.
TrainResult train(MlpModel model, const Dataset& train_set, const Dataset* val_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

struct MetricsReport {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
    double mape = 0.0;  // fraction, over rows with |y| > kMapeFloor
    double r2 = 0.0;
    double max_abs_error = 0.0;
    std::size_t n = 0;
    std::size_t mape_excluded = 0;

    nlohmann::json to_json() const;
};

inline constexpr double kMapeFloor = 1e-8;

// Metrics of predictions against targets (equal shapes, flattened).
MetricsReport compute_metrics(const RowMatrix& predictions, const RowMatrix& targets);
MetricsReport compute_metrics(const std::vector<double>& predictions, const std::vector<double>& targets);
// forward_batch over the dataset's inputs. Throws EmptyInput on no rows.
MetricsReport evaluate(const MlpModel& model, const Dataset& test_set);

// Row indices of each fold: a seeded shuffle cut into k contiguous chunks.
std::vector<std::vector<Eigen::Index>> kfold_indices(Eigen::Index rows, int k, std::uint64_t seed);

struct CvResult {
    double mean_mse = std::numeric_limits<double>::infinity();
    std::vector<double> fold_mse;
};

// Trains k models, each validated on the held-out fold. Throws DomainError
// for k < 2 or k > rows.
CvResult kfold_cv(const Dataset& data, int k, const Architecture& arch, const TrainConfig& config,
                  int threads = 1);

struct SearchSpace {
    std::vector<Activation> activations{Activation::ReLU, Activation::Tanh, Activation::Sigmoid, Activation::ELU};
    double dropout_low = 0.0;
    double dropout_high = 0.2;
    Eigen::Index neurons_low = 200;
    Eigen::Index neurons_high = 600;
    std::vector<InitScheme> inits{InitScheme::Uniform, InitScheme::GlorotUniform, InitScheme::HeUniform};
    std::vector<OptimizerKind> optimizers{OptimizerKind::SGD, OptimizerKind::RMSprop, OptimizerKind::Adam};
    Eigen::Index batch_low = 256;
    Eigen::Index batch_high = 3000;
    int hidden_layers = 4;

    void validate() const;
};

struct Candidate {
    Architecture arch;
    TrainConfig config;
};

Candidate sample_candidate(const SearchSpace& space, Rng& rng, const TrainConfig& base);

struct Trial {
    Candidate candidate;
    CvResult cv;
    bool failed = false;
    std::string error;
};

struct SearchResult {
    std::vector<Trial> ranked;  // ascending mean validation MSE, failures last
    // Top-5 aggregate: mode of categorical, mean of numeric dimensions.
    Candidate consensus;

    nlohmann::json to_json() const;
};

// `extra` candidates (e.g. a reference configuration) are scored alongside
// the sampled ones.
SearchResult random_search(const SearchSpace& space, int trials, const Dataset& data, int k,
                           const TrainConfig& base, std::uint64_t seed, int threads = 1,
                           const std::vector<Candidate>& extra = {});

Candidate aggregate_top(const std::vector<Trial>& ranked, std::size_t top = 5);

struct LrRangeConfig {
    double lr_start = 1e-7;
    double lr_end = 1.0;
    int steps = 100;
    double smoothing = 0.98;
    double divergence_factor = 4.0;
};

struct LrRangeResult {
    std::vector<double> lr;
    std::vector<double> loss;
    std::vector<double> smoothed;
    double steepest_lr = 0.0;   // most negative d(smoothed)/d(log lr)
    double min_loss_lr = 0.0;   // lr at the lowest smoothed loss
    double divergence_lr = 0.0; // first lr with smoothed > factor * best; 0 if none
    double band_low = 0.0;
    double band_high = 0.0;

    std::string to_csv() const;
    nlohmann::json summary_json() const;
};

// Geometric ramp, one mini-batch per step at config.batch_size with the
// config's optimizer. A non-finite loss ends the ramp and marks divergence.
LrRangeResult lr_range_test(MlpModel model, const Dataset& data, const TrainConfig& config,
                            const LrRangeConfig& range = {});

struct SizeStudyRow {
    double factor = 0.0;
    Eigen::Index rows = 0;
    std::vector<double> mse;
    std::vector<double> r2;
    double mse_mean = 0.0;
    double mse_std = 0.0;
    double r2_mean = 0.0;
    double r2_std = 0.0;
};

struct SizeStudyResult {
    std::vector<SizeStudyRow> rows;
    double pooled_mse_std = 0.0;

    std::string to_csv() const;
    // Mean MSE non-increasing within one pooled std and std at the largest
    // factor at most the std at the smallest.
    bool monotone_within_pooled_std() const;
    bool variance_shrinks() const;
};

inline const std::vector<double> kSizeStudyFactors{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

// For each factor, trains `repeats` models (seeds derived from config.seed)
// on the first factor*base rows of train_pool and scores them on test_set.
SizeStudyResult data_size_study(const Dataset& train_pool, const Dataset& test_set,
                                const std::vector<double>& factors, int repeats, const Architecture& arch,
                                const TrainConfig& config, std::size_t base = kSizeStudyBase, int threads = 1);

}  // namespace pricer
