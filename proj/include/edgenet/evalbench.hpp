#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edgenet/data.hpp"
#include "edgenet/model.hpp"

namespace edgenet {

// Accuracy, unweighted mean CE and the per-class confusion matrix of one
// model over one dataset.
struct EvalResult {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    int64_t n_examples = 0;
    int64_t num_classes = 0;
    std::vector<int64_t> confusion; // [true * C + predicted]

    int64_t confusion_at(int64_t truth, int64_t pred) const {
        return confusion[static_cast<size_t>(truth * num_classes + pred)];
    }
};

// Evaluation always uses weight 1 regardless of training class weights, so
// optimized/non-optimized comparisons measure the model, not the weighting.
EvalResult evaluate(const ModelGraph& graph, const LabeledDataset& dataset);

uint64_t measure_size(const std::filesystem::path& path);

struct LatencyStats {
    int iterations = 0;
    double mean_ms = 0.0;
    double p50_ms = 0.0;
    double p95_ms = 0.0;
};

struct BenchResult {
    uint64_t model_size_bytes = 0;
    std::vector<double> samples_ms;
    LatencyStats stats;
};

// Wall-time per inference on a fixed random input (deterministic under
// seed). iterations must be >= 30 after a warm-up of >= 5.
BenchResult bench_latency(const ModelGraph& graph, int iterations, int warmup, uint64_t seed,
                          uint64_t model_size_bytes = 0);

// One row of the size/accuracy/loss comparison table.
struct ReportRow {
    int64_t input_size = 0;
    bool optimized = false;
    double loss = 0.0;
    double accuracy = 0.0;
    uint64_t model_size_bytes = 0;
    std::optional<LatencyStats> latency;
};

std::string csv_from_rows(const std::vector<ReportRow>& rows);

struct ReportFiles {
    std::filesystem::path csv;
    std::filesystem::path json;
    std::filesystem::path plot_accuracy;
    std::filesystem::path plot_loss;
    std::filesystem::path plot_size;
};

// Emit report.csv, report.json and per-metric plot data (x = input size,
// one series per optimization state) under out_dir.
ReportFiles write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& out_dir);

// Round-trip helpers for the JSON form of the report.
std::string json_from_rows(const std::vector<ReportRow>& rows);
std::vector<ReportRow> rows_from_json(const std::string& json_text);

} // namespace edgenet
