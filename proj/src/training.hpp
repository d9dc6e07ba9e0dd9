#pragma once

// Internal helpers shared by the task pipelines.

#include "koopgraph/model.hpp"
#include "koopgraph/tasks.hpp"

#include <vector>

namespace koopgraph::detail {

std::vector<Matrix> snapshot_params(TrainableModel& model);
void restore_params(TrainableModel& model, const std::vector<Matrix>& values);

AdamOptions adam_options(const TrainConfig& cfg);

struct ClassifierFit {
    SplitMetrics train;
    SplitMetrics val;
    SplitMetrics test;
    int best_epoch = 0;
    std::vector<EpochRecord> history;
};

/// Full-batch training on the train mask; keeps the parameters of the epoch
/// with the best validation accuracy (earliest on ties).
ClassifierFit train_classifier(TrainableModel& model, const NodeClassDataset& dataset, const TrainConfig& cfg);

/// Layer widths {input, hidden x hidden_layers, output}.
std::vector<int> layer_dims(int input, const ModelSpec& spec, int output);

}  // namespace koopgraph::detail
