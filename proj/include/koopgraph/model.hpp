#pragma once

#include "koopgraph/kernels.hpp"
#include "koopgraph/rng.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace koopgraph {

// ---------------------------------------------------------------------------
// Spectral filter over DMD modes: out = Psi diag(theta) Psi^T h w.
// The N x N operator is never formed; products run right to left.

struct FilterCache {
    Matrix modes;
    Vector theta;
    Matrix h;
    Matrix w;         // empty when the filter has no weight
    Matrix projected; // Psi^T (h w), r x d'
};

Matrix filter_forward(const Matrix& modes, const Vector& theta, const Matrix& h, const Matrix& w,
                      FilterCache* cache = nullptr);

/// Weightless form, Psi diag(theta) Psi^T h.
Matrix filter_forward(const Matrix& modes, const Vector& theta, const Matrix& h,
                      FilterCache* cache = nullptr);

struct FilterGrads {
    Vector theta;
    Matrix h;
    Matrix w;  // empty for the weightless form
};

FilterGrads filter_backward(const Matrix& grad_out, const FilterCache& cache);

// ---------------------------------------------------------------------------
// Trainable models.

enum class Arch { standard, conv_first };
enum class Activation { relu, none };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

struct DenseLayer {
    Matrix weight;  // in x out
    Matrix bias;    // 1 x out
    Activation activation = Activation::none;
};

/// Handle on one parameter block for the optimizer and the gradient checker.
struct ParamRef {
    std::string name;
    Matrix* value = nullptr;
    bool decay = true;
};

class TrainableModel {
public:
    virtual ~TrainableModel() = default;
    /// rng drives dropout masks and is only read in train mode.
    virtual Matrix forward(const Matrix& features, bool train_mode, Rng* rng) = 0;
    /// Gradients for the last forward call, aligned with parameters().
    virtual std::vector<Matrix> backward(const Matrix& grad_out) = 0;
    virtual std::vector<ParamRef> parameters() = 0;
};

/// DMD-GNN. standard: dense-in -> filter -> dense...; conv_first: filter ->
/// dense... . Hidden layers use relu followed by inverted dropout. The
/// filter's W is the weight of the dense layer that follows it.
class DmdGnnModel final : public TrainableModel {
public:
    DmdGnnModel() = default;

    /// dims = {input, hidden..., output}. standard needs at least one hidden
    /// width; theta starts at all ones, dense weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    DmdGnnModel(Arch arch, Matrix modes, const std::vector<int>& dims, double dropout, Rng& init);

    Matrix forward(const Matrix& features, bool train_mode, Rng* rng) override;
    std::vector<Matrix> backward(const Matrix& grad_out) override;
    std::vector<ParamRef> parameters() override;

    Arch arch() const noexcept { return arch_; }
    const Matrix& modes() const noexcept { return modes_; }
    const Matrix& theta() const noexcept { return theta_; }
    Matrix& theta() noexcept { return theta_; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    std::vector<DenseLayer>& layers() noexcept { return layers_; }
    double dropout() const noexcept { return dropout_; }
    std::vector<int> dims() const;

    /// JSON manifest plus KGRF tensors in dir.
    void save(const std::filesystem::path& dir) const;
    static DmdGnnModel load(const std::filesystem::path& dir);

private:
    int filter_position() const noexcept { return arch_ == Arch::standard ? 1 : 0; }

    Arch arch_ = Arch::standard;
    Matrix modes_;
    Matrix theta_;  // r x 1
    std::vector<DenseLayer> layers_;
    double dropout_ = 0.0;

    struct Cache {
        Matrix filter_in;
        std::vector<Matrix> layer_in;
        std::vector<Matrix> pre_activation;
        std::vector<Matrix> mask;  // empty when dropout was inactive
    } cache_;
};

/// Dense chain with an optional fixed propagation applied before every
/// layer: no propagation gives a plain MLP (a single layer is logistic
/// regression), a self-looped normalized adjacency gives a plain GCN.
class DenseChainModel final : public TrainableModel {
public:
    DenseChainModel(const std::vector<int>& dims, double dropout, Rng& init,
                    Matrix propagation = Matrix());

    Matrix forward(const Matrix& features, bool train_mode, Rng* rng) override;
    std::vector<Matrix> backward(const Matrix& grad_out) override;
    std::vector<ParamRef> parameters() override;

private:
    std::vector<DenseLayer> layers_;
    Matrix propagation_;
    double dropout_ = 0.0;
    std::vector<Matrix> layer_in_;
    std::vector<Matrix> pre_activation_;
    std::vector<Matrix> mask_;
};

// ---------------------------------------------------------------------------
// Losses.

enum class LossKind { ce, wce, mse, bce };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct LossTargets {
    std::vector<int> labels;    // ce / wce: one class per row
    Matrix values;              // mse / bce: same shape as the outputs
    std::vector<int> rows;      // rows that enter the loss; empty = all
    Vector class_weights;       // wce only
};

struct LossResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d outputs, same shape as the outputs
};

/// Mean-reduced loss and its gradient. wce divides by the summed weights of
/// the selected rows, so unit weights reproduce ce.
LossResult loss_and_grad(LossKind kind, const Matrix& outputs, const LossTargets& targets);

/// w_c = n / (C * count_c) over the given rows; absent classes get 0.
Vector inverse_frequency_weights(const std::vector<int>& labels, const std::vector<int>& rows,
                                 int n_classes);

// ---------------------------------------------------------------------------
// Optimizer.

struct AdamOptions {
    double lr = 1e-3;
    double weight_decay = 0.0;  // L2 added to the gradient of decayed blocks
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long step = 0;
};

void adam_step(std::span<const ParamRef> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options);

// ---------------------------------------------------------------------------
// Training configuration and gradient verification.

struct TrainConfig {
    double lr = 0.01;
    double weight_decay = 5e-4;
    double dropout = 0.5;
    int hidden_dim = 64;
    int epochs = 200;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::ce;

    void validate() const;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

struct GradCheckOptions {
    double tolerance = 1e-4;
    double step = 1e-6;
    /// With train_mode the dropout stream is reseeded before every forward
    /// so that all evaluations share one mask.
    bool train_mode = false;
    std::uint64_t dropout_seed = 0;
    /// Test hook applied to the analytic gradients before comparison.
    std::function<void(std::vector<Matrix>&)> corrupt;
};

using OutputLoss = std::function<LossResult(const Matrix& outputs)>;

/// Central finite differences against backward(). The error of each block is
/// max|analytic - numeric| / max(max|analytic|, max|numeric|, 1e-12).
GradCheckReport grad_check(TrainableModel& model, const Matrix& features, const OutputLoss& loss,
                           const GradCheckOptions& options = {});

}  // namespace koopgraph
