#include "edgenet/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>

#include <json.hpp>

#include "edgenet/rng.hpp"
#include "edgenet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace edgenet {

EvalResult evaluate(const ModelGraph& graph, const LabeledDataset& dataset) {
    if (dataset.items.empty()) throw ConfigError("evaluate: dataset is empty");
    const ImageU8& proto = dataset.items.front().image;
    if (proto.height != graph.input_size || proto.width != graph.input_size)
        throw ShapeError("evaluate: dataset extents " + std::to_string(proto.height) + "x" +
                         std::to_string(proto.width) + " do not match model input size " +
                         std::to_string(graph.input_size));
    for (const auto& item : dataset.items) {
        if (item.image.height != proto.height || item.image.width != proto.width)
            throw ShapeError("evaluate: dataset images have mixed extents");
        if (item.label < 0 || item.label >= graph.num_classes)
            throw ConfigError("evaluate: label out of range for the model's class count");
    }

    EvalResult res;
    res.num_classes = graph.num_classes;
    res.n_examples = static_cast<int64_t>(dataset.items.size());
    res.confusion.assign(static_cast<size_t>(graph.num_classes * graph.num_classes), 0);

    constexpr size_t kBatch = 32;
    const int64_t stride = proto.height * proto.width * proto.channels;
    double loss_sum = 0.0;
    int64_t correct = 0;

    for (size_t start = 0; start < dataset.items.size(); start += kBatch) {
        const size_t end = std::min(dataset.items.size(), start + kBatch);
        Tensor batch(
            Shape{static_cast<int64_t>(end - start), proto.height, proto.width, proto.channels});
        for (size_t i = start; i < end; ++i) {
            const Tensor img = normalize(dataset.items[i].image);
            std::memcpy(batch.data() + static_cast<int64_t>(i - start) * stride, img.data(),
                        sizeof(float) * static_cast<size_t>(stride));
        }
        const Tensor probs = forward_eval(graph, batch);
        const int64_t c = probs.dim(1);
        for (size_t i = start; i < end; ++i) {
            const int64_t r = static_cast<int64_t>(i - start);
            const float* row = probs.data() + r * c;
            const int64_t pred = std::max_element(row, row + c) - row;
            const int32_t truth = dataset.items[i].label;
            // evaluation loss is always unweighted
            const double p = std::max(static_cast<double>(row[truth]), 1e-12);
            loss_sum += -std::log(p);
            if (pred == truth) ++correct;
            ++res.confusion[static_cast<size_t>(truth * c + pred)];
        }
    }

    res.mean_loss = loss_sum / static_cast<double>(res.n_examples);
    res.accuracy = static_cast<double>(correct) / static_cast<double>(res.n_examples);
    return res;
}

uint64_t measure_size(const fs::path& path) {
    std::error_code ec;
    const uint64_t size = fs::file_size(path, ec);
    if (ec) throw IoError("cannot stat " + path.string() + ": " + ec.message());
    return size;
}

namespace {

double percentile(std::vector<double> sorted, double q) {
    // nearest-rank on an already sorted sample vector
    const size_t n = sorted.size();
    const size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
    return sorted[std::min(n - 1, std::max<size_t>(rank, 1) - 1)];
}

} // namespace

BenchResult bench_latency(const ModelGraph& graph, int iterations, int warmup, uint64_t seed,
                          uint64_t model_size_bytes) {
    if (iterations < 30) throw ConfigError("bench: iterations must be >= 30");
    if (warmup < 5) throw ConfigError("bench: warmup must be >= 5");

    Rng rng(seed);
    Tensor input(Shape{graph.input_size, graph.input_size, 3});
    for (int64_t i = 0; i < input.numel(); ++i) input[i] = static_cast<float>(rng.uniform());

    for (int i = 0; i < warmup; ++i) infer(graph, input);

    BenchResult res;
    res.model_size_bytes = model_size_bytes;
    res.samples_ms.reserve(static_cast<size_t>(iterations));
    for (int i = 0; i < iterations; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        infer(graph, input);
        const auto t1 = std::chrono::steady_clock::now();
        res.samples_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }

    std::vector<double> sorted = res.samples_ms;
    std::sort(sorted.begin(), sorted.end());
    res.stats.iterations = iterations;
    res.stats.mean_ms = std::accumulate(sorted.begin(), sorted.end(), 0.0) /
                        static_cast<double>(sorted.size());
    res.stats.p50_ms = percentile(sorted, 0.50);
    res.stats.p95_ms = percentile(sorted, 0.95);
    return res;
}

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

std::vector<ReportRow> sorted_rows(std::vector<ReportRow> rows) {
    std::stable_sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        if (a.input_size != b.input_size) return a.input_size < b.input_size;
        return a.optimized < b.optimized;
    });
    return rows;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + path.string());
    out << text;
    if (!out.good()) throw IoError("write failed for " + path.string());
}

} // namespace

std::string csv_from_rows(const std::vector<ReportRow>& rows) {
    std::string csv =
        "image_size,optimized,loss,accuracy,model_size_bytes,"
        "latency_mean_ms,latency_p50_ms,latency_p95_ms\n";
    for (const ReportRow& r : sorted_rows(rows)) {
        csv += std::to_string(r.input_size);
        csv += r.optimized ? ",yes," : ",no,";
        csv += fmt(r.loss) + "," + fmt(r.accuracy) + "," + std::to_string(r.model_size_bytes) + ",";
        if (r.latency) {
            csv += fmt(r.latency->mean_ms, "%.3f") + "," + fmt(r.latency->p50_ms, "%.3f") + "," +
                   fmt(r.latency->p95_ms, "%.3f");
        } else {
            csv += ",,";
        }
        csv += "\n";
    }
    return csv;
}

std::string json_from_rows(const std::vector<ReportRow>& rows) {
    json root;
    root["rows"] = json::array();
    for (const ReportRow& r : sorted_rows(rows)) {
        json row;
        row["input_size"] = r.input_size;
        row["optimized"] = r.optimized;
        row["loss"] = r.loss;
        row["accuracy"] = r.accuracy;
        row["model_size_bytes"] = r.model_size_bytes;
        if (r.latency) {
            row["latency"] = {{"iterations", r.latency->iterations},
                              {"mean_ms", r.latency->mean_ms},
                              {"p50_ms", r.latency->p50_ms},
                              {"p95_ms", r.latency->p95_ms}};
        } else {
            row["latency"] = nullptr;
        }
        root["rows"].push_back(row);
    }
    return root.dump(2) + "\n";
}

std::vector<ReportRow> rows_from_json(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("report json: ") + e.what());
    }
    std::vector<ReportRow> rows;
    for (const json& row : root.at("rows")) {
        ReportRow r;
        r.input_size = row.at("input_size").get<int64_t>();
        r.optimized = row.at("optimized").get<bool>();
        r.loss = row.at("loss").get<double>();
        r.accuracy = row.at("accuracy").get<double>();
        r.model_size_bytes = row.at("model_size_bytes").get<uint64_t>();
        if (!row.at("latency").is_null()) {
            LatencyStats ls;
            ls.iterations = row["latency"].at("iterations").get<int>();
            ls.mean_ms = row["latency"].at("mean_ms").get<double>();
            ls.p50_ms = row["latency"].at("p50_ms").get<double>();
            ls.p95_ms = row["latency"].at("p95_ms").get<double>();
            r.latency = ls;
        }
        rows.push_back(r);
    }
    return rows;
}

ReportFiles write_report(const std::vector<ReportRow>& rows, const fs::path& out_dir) {
    if (rows.empty()) throw ConfigError("report: no rows");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    ReportFiles files;
    files.csv = out_dir / "report.csv";
    files.json = out_dir / "report.json";
    files.plot_accuracy = out_dir / "plot_accuracy.tsv";
    files.plot_loss = out_dir / "plot_loss.tsv";
    files.plot_size = out_dir / "plot_size.tsv";

    write_text(files.csv, csv_from_rows(rows));
    write_text(files.json, json_from_rows(rows));

    // Plot data: one row per input size, one column per optimization state
    // (the x axis and series of the size/accuracy/loss comparison figures).
    std::vector<int64_t> sizes;
    std::map<std::pair<int64_t, bool>, const ReportRow*> by_key;
    for (const ReportRow& r : rows) {
        if (std::find(sizes.begin(), sizes.end(), r.input_size) == sizes.end())
            sizes.push_back(r.input_size);
        by_key[{r.input_size, r.optimized}] = &r;
    }
    std::sort(sizes.begin(), sizes.end());

    auto plot = [&](const fs::path& path, auto getter) {
        std::string tsv = "input_size\tnon_optimized\toptimized\n";
        for (int64_t s : sizes) {
            tsv += std::to_string(s);
            for (bool opt : {false, true}) {
                tsv += '\t';
                auto it = by_key.find({s, opt});
                if (it != by_key.end()) tsv += getter(*it->second);
            }
            tsv += '\n';
        }
        write_text(path, tsv);
    };

    plot(files.plot_accuracy, [](const ReportRow& r) { return fmt(r.accuracy); });
    plot(files.plot_loss, [](const ReportRow& r) { return fmt(r.loss); });
    plot(files.plot_size, [](const ReportRow& r) { return std::to_string(r.model_size_bytes); });
    return files;
}

} // namespace edgenet
