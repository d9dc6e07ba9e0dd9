#include "koopgraph/model.hpp"

#include "koopgraph/error.hpp"
#include "koopgraph/io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace koopgraph {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw ContractError(what);
}

DenseLayer make_layer(int in, int out, Activation act, Rng& init) {
    DenseLayer layer;
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    layer.weight.resize(in, out);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
            layer.weight(i, j) = (2.0 * uniform01(init) - 1.0) * bound;
        }
    }
    layer.bias = Matrix::Zero(1, out);
    layer.activation = act;
    return layer;
}

std::vector<DenseLayer> make_chain(const std::vector<int>& dims, Rng& init) {
    require(dims.size() >= 2, "model: need at least input and output dims");
    for (const int d : dims) require(d >= 1, "model: layer widths must be >= 1");
    std::vector<DenseLayer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        const bool last = i + 2 == dims.size();
        layers.push_back(make_layer(dims[i], dims[i + 1], last ? Activation::none : Activation::relu, init));
    }
    return layers;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
    Matrix mask(rows, cols);
    const double keep_scale = 1.0 / (1.0 - p);
    for (Eigen::Index j = 0; j < cols; ++j) {
        for (Eigen::Index i = 0; i < rows; ++i) {
            mask(i, j) = uniform01(rng) < p ? 0.0 : keep_scale;
        }
    }
    return mask;
}

Matrix dense_apply(const DenseLayer& layer, const Matrix& h) {
    require(h.cols() == layer.weight.rows(),
            "dense layer: input width " + std::to_string(h.cols()) + " does not match " +
                std::to_string(layer.weight.rows()));
    Matrix z = h * layer.weight;
    z.rowwise() += layer.bias.row(0);
    return z;
}

std::vector<int> rows_or_all(const std::vector<int>& rows, Eigen::Index n) {
    if (!rows.empty()) return rows;
    std::vector<int> all(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = static_cast<int>(i);
    return all;
}

}  // namespace

// ---------------------------------------------------------------------------
// Filter

Matrix filter_forward(const Matrix& modes, const Vector& theta, const Matrix& h, const Matrix& w,
                      FilterCache* cache) {
    require(theta.size() == modes.cols(), "filter: theta length must equal the mode count");
    require(h.rows() == modes.rows(), "filter: h rows must equal the mode length");
    const bool has_w = w.size() > 0;
    if (has_w) require(w.rows() == h.cols(), "filter: w rows must equal h columns");
    const Matrix hw = has_w ? Matrix(h * w) : h;
    Matrix projected = modes.transpose() * hw;
    Matrix out = modes * (theta.asDiagonal() * projected);
    if (cache) {
        cache->modes = modes;
        cache->theta = theta;
        cache->h = h;
        cache->w = w;
        cache->projected = std::move(projected);
    }
    return out;
}

Matrix filter_forward(const Matrix& modes, const Vector& theta, const Matrix& h, FilterCache* cache) {
    return filter_forward(modes, theta, h, Matrix(), cache);
}

FilterGrads filter_backward(const Matrix& grad_out, const FilterCache& cache) {
    require(grad_out.rows() == cache.modes.rows() && grad_out.cols() == cache.projected.cols(),
            "filter_backward: gradient shape does not match the cached forward");
    FilterGrads g;
    const Matrix d_filtered = cache.modes.transpose() * grad_out;  // r x d'
    g.theta = d_filtered.cwiseProduct(cache.projected).rowwise().sum();
    const Matrix d_hw = cache.modes * (cache.theta.asDiagonal() * d_filtered);  // N x d'
    if (cache.w.size() > 0) {
        g.w = cache.h.transpose() * d_hw;
        g.h = d_hw * cache.w.transpose();
    } else {
        g.h = d_hw;
    }
    return g;
}

// ---------------------------------------------------------------------------
// DmdGnnModel

std::string to_string(Arch arch) {
    return arch == Arch::standard ? "standard" : "conv_first";
}

Arch arch_from_string(const std::string& name) {
    if (name == "standard") return Arch::standard;
    if (name == "conv_first") return Arch::conv_first;
    throw ContractError("unknown architecture '" + name + "'");
}

DmdGnnModel::DmdGnnModel(Arch arch, Matrix modes, const std::vector<int>& dims, double dropout, Rng& init)
    : arch_(arch), modes_(std::move(modes)), dropout_(dropout) {
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
    require(modes_.cols() >= 1, "model: need at least one mode");
    if (arch == Arch::standard) {
        require(dims.size() >= 3, "model: the standard architecture needs a hidden layer");
    }
    layers_ = make_chain(dims, init);
    theta_ = Matrix::Ones(modes_.cols(), 1);
}

std::vector<int> DmdGnnModel::dims() const {
    std::vector<int> d;
    if (layers_.empty()) return d;
    d.push_back(static_cast<int>(layers_.front().weight.rows()));
    for (const auto& l : layers_) d.push_back(static_cast<int>(l.weight.cols()));
    return d;
}

Matrix DmdGnnModel::forward(const Matrix& features, bool train_mode, Rng* rng) {
    require(features.rows() == modes_.rows(), "model: feature rows must equal the node count");
    const auto count = layers_.size();
    cache_.layer_in.assign(count, Matrix());
    cache_.pre_activation.assign(count, Matrix());
    cache_.mask.assign(count, Matrix());
    const bool drop = train_mode && dropout_ > 0.0;
    if (drop) require(rng != nullptr, "model: train-mode dropout needs an rng");

    Matrix h = features;
    for (std::size_t i = 0; i < count; ++i) {
        if (static_cast<int>(i) == filter_position()) {
            cache_.filter_in = h;
            h = filter_forward(modes_, theta_.col(0), h);
        }
        cache_.layer_in[i] = h;
        Matrix z = dense_apply(layers_[i], h);
        if (layers_[i].activation == Activation::relu) {
            cache_.pre_activation[i] = z;
            h = z.cwiseMax(0.0);
        } else {
            h = std::move(z);
        }
        if (drop && i + 1 < count) {
            cache_.mask[i] = dropout_mask(h.rows(), h.cols(), dropout_, *rng);
            h = h.cwiseProduct(cache_.mask[i]);
        }
    }
    return h;
}

std::vector<Matrix> DmdGnnModel::backward(const Matrix& grad_out) {
    const auto count = layers_.size();
    require(cache_.layer_in.size() == count, "model: backward called before forward");
    std::vector<Matrix> grads(1 + 2 * count);
    Matrix g = grad_out;
    for (std::size_t k = count; k-- > 0;) {
        if (cache_.mask[k].size()) g = g.cwiseProduct(cache_.mask[k]);
        if (layers_[k].activation == Activation::relu) {
            g = g.cwiseProduct(cache_.pre_activation[k].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        }
        grads[1 + 2 * k] = cache_.layer_in[k].transpose() * g;
        grads[2 + 2 * k] = g.colwise().sum();
        g = g * layers_[k].weight.transpose();
        if (static_cast<int>(k) == filter_position()) {
            FilterCache fc;
            fc.modes = modes_;
            fc.theta = theta_.col(0);
            fc.h = cache_.filter_in;
            fc.projected = modes_.transpose() * cache_.filter_in;
            const FilterGrads fg = filter_backward(g, fc);
            grads[0] = fg.theta;
            g = fg.h;
        }
    }
    return grads;
}

std::vector<ParamRef> DmdGnnModel::parameters() {
    std::vector<ParamRef> params;
    params.push_back({"theta", &theta_, false});
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        params.push_back({"layer" + std::to_string(i) + ".weight", &layers_[i].weight, true});
        params.push_back({"layer" + std::to_string(i) + ".bias", &layers_[i].bias, true});
    }
    return params;
}

void DmdGnnModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["arch"] = to_string(arch_);
    manifest["dims"] = dims();
    manifest["rank"] = modes_.cols();
    manifest["nodes"] = modes_.rows();
    manifest["dropout"] = dropout_;
    nlohmann::json acts = nlohmann::json::array();
    for (const auto& l : layers_) acts.push_back(l.activation == Activation::relu ? "relu" : "none");
    manifest["activations"] = acts;
    io::write_text(dir / "model.json", manifest.dump(2) + "\n");
    io::write_tensor(dir / "modes.kgrf", modes_);
    io::write_tensor(dir / "theta.kgrf", theta_);
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        io::write_tensor(dir / ("layer" + std::to_string(i) + "_weight.kgrf"), layers_[i].weight);
        io::write_tensor(dir / ("layer" + std::to_string(i) + "_bias.kgrf"), layers_[i].bias);
    }
}

DmdGnnModel DmdGnnModel::load(const std::filesystem::path& dir) {
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(io::read_text(dir / "model.json"));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("checkpoint manifest: " + std::string(e.what()));
    }
    DmdGnnModel m;
    m.arch_ = arch_from_string(manifest.at("arch").get<std::string>());
    m.dropout_ = manifest.at("dropout").get<double>();
    m.modes_ = io::read_tensor(dir / "modes.kgrf");
    m.theta_ = io::read_tensor(dir / "theta.kgrf");
    const auto acts = manifest.at("activations").get<std::vector<std::string>>();
    for (std::size_t i = 0; i < acts.size(); ++i) {
        DenseLayer l;
        l.weight = io::read_tensor(dir / ("layer" + std::to_string(i) + "_weight.kgrf"));
        l.bias = io::read_tensor(dir / ("layer" + std::to_string(i) + "_bias.kgrf"));
        l.activation = acts[i] == "relu" ? Activation::relu : Activation::none;
        m.layers_.push_back(std::move(l));
    }
    if (m.theta_.rows() != m.modes_.cols() || m.dims() != manifest.at("dims").get<std::vector<int>>()) {
        throw ConfigError("checkpoint tensors do not match the manifest in " + dir.string());
    }
    return m;
}

// ---------------------------------------------------------------------------
// DenseChainModel

DenseChainModel::DenseChainModel(const std::vector<int>& dims, double dropout, Rng& init, Matrix propagation)
    : layers_(make_chain(dims, init)), propagation_(std::move(propagation)), dropout_(dropout) {
    require(dropout >= 0.0 && dropout < 1.0, "model: dropout must lie in [0, 1)");
    require(propagation_.size() == 0 || propagation_.rows() == propagation_.cols(),
            "model: propagation operator must be square");
}

Matrix DenseChainModel::forward(const Matrix& features, bool train_mode, Rng* rng) {
    const auto count = layers_.size();
    layer_in_.assign(count, Matrix());
    pre_activation_.assign(count, Matrix());
    mask_.assign(count, Matrix());
    const bool drop = train_mode && dropout_ > 0.0;
    if (drop) require(rng != nullptr, "model: train-mode dropout needs an rng");
    Matrix h = features;
    for (std::size_t i = 0; i < count; ++i) {
        if (propagation_.size()) {
            require(h.rows() == propagation_.rows(), "model: feature rows must equal the node count");
            h = propagation_ * h;
        }
        layer_in_[i] = h;
        Matrix z = dense_apply(layers_[i], h);
        if (layers_[i].activation == Activation::relu) {
            pre_activation_[i] = z;
            h = z.cwiseMax(0.0);
        } else {
            h = std::move(z);
        }
        if (drop && i + 1 < count) {
            mask_[i] = dropout_mask(h.rows(), h.cols(), dropout_, *rng);
            h = h.cwiseProduct(mask_[i]);
        }
    }
    return h;
}

std::vector<Matrix> DenseChainModel::backward(const Matrix& grad_out) {
    const auto count = layers_.size();
    require(layer_in_.size() == count, "model: backward called before forward");
    std::vector<Matrix> grads(2 * count);
    Matrix g = grad_out;
    for (std::size_t k = count; k-- > 0;) {
        if (mask_[k].size()) g = g.cwiseProduct(mask_[k]);
        if (layers_[k].activation == Activation::relu) {
            g = g.cwiseProduct(pre_activation_[k].unaryExpr([](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        }
        grads[2 * k] = layer_in_[k].transpose() * g;
        grads[2 * k + 1] = g.colwise().sum();
        g = g * layers_[k].weight.transpose();
        if (propagation_.size()) g = propagation_.transpose() * g;
    }
    return grads;
}

std::vector<ParamRef> DenseChainModel::parameters() {
    std::vector<ParamRef> params;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        params.push_back({"layer" + std::to_string(i) + ".weight", &layers_[i].weight, true});
        params.push_back({"layer" + std::to_string(i) + ".bias", &layers_[i].bias, true});
    }
    return params;
}

// ---------------------------------------------------------------------------
// Losses

std::string to_string(LossKind kind) {
    switch (kind) {
        case LossKind::ce: return "ce";
        case LossKind::wce: return "wce";
        case LossKind::mse: return "mse";
        case LossKind::bce: return "bce";
    }
    return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "ce") return LossKind::ce;
    if (name == "wce") return LossKind::wce;
    if (name == "mse") return LossKind::mse;
    if (name == "bce") return LossKind::bce;
    throw ContractError("unknown loss '" + name + "'");
}

Vector inverse_frequency_weights(const std::vector<int>& labels, const std::vector<int>& rows,
                                 int n_classes) {
    require(n_classes >= 1, "class weights: need at least one class");
    const auto use = rows_or_all(rows, static_cast<Eigen::Index>(labels.size()));
    Vector counts = Vector::Zero(n_classes);
    for (const int r : use) {
        const int c = labels.at(static_cast<std::size_t>(r));
        require(c >= 0 && c < n_classes, "class weights: label outside [0, C)");
        counts[c] += 1.0;
    }
    Vector w = Vector::Zero(n_classes);
    const auto total = static_cast<double>(use.size());
    for (int c = 0; c < n_classes; ++c) {
        if (counts[c] > 0.0) w[c] = total / (n_classes * counts[c]);
    }
    return w;
}

LossResult loss_and_grad(LossKind kind, const Matrix& outputs, const LossTargets& targets) {
    const auto rows = rows_or_all(targets.rows, outputs.rows());
    require(!rows.empty(), "loss: no rows selected");
    for (const int r : rows) require(r >= 0 && r < outputs.rows(), "loss: row index out of range");
    LossResult res;
    res.grad = Matrix::Zero(outputs.rows(), outputs.cols());

    if (kind == LossKind::ce || kind == LossKind::wce) {
        require(static_cast<Eigen::Index>(targets.labels.size()) == outputs.rows(),
                "loss: need one label per output row");
        const Eigen::Index classes = outputs.cols();
        if (kind == LossKind::wce) {
            require(targets.class_weights.size() == classes, "loss: wce needs one weight per class");
        }
        double weight_sum = 0.0;
        for (const int r : rows) {
            const int c = targets.labels[static_cast<std::size_t>(r)];
            require(c >= 0 && c < classes, "loss: class index " + std::to_string(c) + " outside [0, " +
                                                std::to_string(classes) + ")");
            weight_sum += kind == LossKind::wce ? targets.class_weights[c] : 1.0;
        }
        require(weight_sum > 0.0, "loss: selected rows carry zero total weight");
        for (const int r : rows) {
            const int c = targets.labels[static_cast<std::size_t>(r)];
            const double w = (kind == LossKind::wce ? targets.class_weights[c] : 1.0) / weight_sum;
            const Eigen::RowVectorXd z = outputs.row(r);
            const double zmax = z.maxCoeff();
            const Eigen::RowVectorXd e = (z.array() - zmax).exp();
            const double s = e.sum();
            res.loss += w * (std::log(s) + zmax - z[c]);
            res.grad.row(r) = w * (e / s);
            res.grad(r, c) -= w;
        }
        return res;
    }

    require(targets.values.rows() == outputs.rows() && targets.values.cols() == outputs.cols(),
            "loss: target values must match the output shape");
    const double count = static_cast<double>(rows.size()) * static_cast<double>(outputs.cols());
    for (const int r : rows) {
        for (Eigen::Index j = 0; j < outputs.cols(); ++j) {
            const double z = outputs(r, j);
            const double t = targets.values(r, j);
            if (kind == LossKind::mse) {
                res.loss += (z - t) * (z - t) / count;
                res.grad(r, j) = 2.0 * (z - t) / count;
            } else {
                res.loss += (std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)))) / count;
                res.grad(r, j) = (1.0 / (1.0 + std::exp(-z)) - t) / count;
            }
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Adam

void adam_step(std::span<const ParamRef> params, std::span<const Matrix> grads, AdamState& state,
               const AdamOptions& options) {
    require(params.size() == grads.size(), "adam: parameter and gradient counts differ");
    if (state.m.empty()) {
        for (const auto& p : params) {
            state.m.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
            state.v.push_back(Matrix::Zero(p.value->rows(), p.value->cols()));
        }
    }
    require(state.m.size() == params.size(), "adam: state does not match the parameter list");
    ++state.step;
    const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k].value;
        require(grads[k].rows() == p.rows() && grads[k].cols() == p.cols(),
                "adam: gradient shape differs from parameter " + params[k].name);
        Matrix g = grads[k];
        if (params[k].decay && options.weight_decay != 0.0) g += options.weight_decay * p;
        state.m[k] = options.beta1 * state.m[k] + (1.0 - options.beta1) * g;
        state.v[k] = options.beta2 * state.v[k] + (1.0 - options.beta2) * g.cwiseProduct(g);
        const Eigen::ArrayXXd m_hat = state.m[k].array() / bc1;
        const Eigen::ArrayXXd v_hat = state.v[k].array() / bc2;
        p.array() -= options.lr * m_hat / (v_hat.sqrt() + options.eps);
    }
}

// ---------------------------------------------------------------------------
// Config and gradient check

void TrainConfig::validate() const {
    require(lr > 0.0 && std::isfinite(lr), "train: lr must be > 0");
    require(weight_decay >= 0.0, "train: weight_decay must be >= 0");
    require(dropout >= 0.0 && dropout < 1.0, "train: dropout must lie in [0, 1)");
    require(hidden_dim >= 1, "train: hidden_dim must be >= 1");
    require(epochs >= 1, "train: epochs must be >= 1");
}

GradCheckReport grad_check(TrainableModel& model, const Matrix& features, const OutputLoss& loss,
                           const GradCheckOptions& options) {
    auto evaluate = [&]() {
        Rng rng = make_stream(options.dropout_seed, "dropout");
        return loss(model.forward(features, options.train_mode, &rng));
    };
    const LossResult base = evaluate();
    std::vector<Matrix> analytic = model.backward(base.grad);
    if (options.corrupt) options.corrupt(analytic);

    GradCheckReport report;
    report.tolerance = options.tolerance;
    auto params = model.parameters();
    for (std::size_t k = 0; k < params.size(); ++k) {
        Matrix& p = *params[k].value;
        Matrix numeric(p.rows(), p.cols());
        for (Eigen::Index j = 0; j < p.cols(); ++j) {
            for (Eigen::Index i = 0; i < p.rows(); ++i) {
                const double orig = p(i, j);
                p(i, j) = orig + options.step;
                const double up = evaluate().loss;
                p(i, j) = orig - options.step;
                const double down = evaluate().loss;
                p(i, j) = orig;
                numeric(i, j) = (up - down) / (2.0 * options.step);
            }
        }
        const Matrix& a = analytic[k];
        const double scale = std::max({a.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff(), 1e-12});
        const double err = (a - numeric).cwiseAbs().maxCoeff() / scale;
        report.entries.push_back({params[k].name, err});
        report.max_rel_error = std::max(report.max_rel_error, err);
    }
    report.passed = report.max_rel_error <= options.tolerance;
    return report;
}

}  // namespace koopgraph
