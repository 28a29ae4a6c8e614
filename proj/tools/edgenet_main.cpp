// Command-line front end wiring the full pipeline:
//   synth/prepare -> train -> quantize/prune -> eval/bench -> report
//
// Exit codes: 0 success, 1 validation/numeric error, 2 usage or I/O error.
// Every artifact-producing command writes a <artifact>.manifest.json with
// the resolved configuration, seed and output checksums.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>
#include <json.hpp>

#include "edgenet/data.hpp"
#include "edgenet/evalbench.hpp"
#include "edgenet/log.hpp"
#include "edgenet/quantize.hpp"
#include "edgenet/serialize.hpp"
#include "edgenet/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace edgenet;

namespace {

uint64_t fnv1a64_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    uint64_t h = 0xcbf29ce484222325ULL;
    char buf[1 << 16];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize n = in.gcount();
        for (std::streamsize i = 0; i < n; ++i) {
            h ^= static_cast<uint8_t>(buf[i]);
            h *= 0x100000001b3ULL;
        }
        if (in.eof()) break;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot create " + tmp.string());
        out << text;
        if (!out.good()) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + ": " + ec.message());
}

// Written alongside every produced artifact; re-running a command with the
// manifest's config and seed reproduces the artifact byte for byte in
// single-threaded mode.
void write_manifest(const std::string& command, const json& config, uint64_t seed,
                    const json& inputs, const std::vector<fs::path>& outputs) {
    if (outputs.empty()) return;
    json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["inputs"] = inputs;
    m["outputs"] = json::array();
    m["checksums"] = json::object();
    for (const fs::path& p : outputs) {
        m["outputs"].push_back(p.string());
        m["checksums"][p.filename().string()] = "fnv1a64:" + hex64(fnv1a64_file(p));
    }
    write_text_atomic(outputs.front().string() + ".manifest.json", m.dump(2) + "\n");
}

std::vector<float> parse_weights(const std::string& csv) {
    std::vector<float> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            out.push_back(std::stof(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad --class-weights entry '" + tok + "'");
        }
    }
    return out;
}

// Default class weighting: confusable gestures one/three/four get a
// slightly higher weight when the dataset uses the gesture class names.
std::vector<float> default_class_weights(const std::vector<std::string>& class_names) {
    std::vector<float> w(class_names.size(), 1.0f);
    bool any = false;
    for (size_t i = 0; i < class_names.size(); ++i) {
        if (class_names[i] == "one" || class_names[i] == "three" || class_names[i] == "four") {
            w[i] = 1.2f;
            any = true;
        }
    }
    return any ? w : std::vector<float>(class_names.size(), 1.0f);
}

DType parse_mode(const std::string& mode) {
    if (mode == "f32") return DType::F32;
    if (mode == "f16") return DType::F16;
    if (mode == "i8") return DType::I8;
    throw ConfigError("unknown precision mode '" + mode + "' (want f32|f16|i8)");
}

struct LoadedModel {
    ModelGraph graph;
    bool optimized = false; // deployed artifact vs training checkpoint
    DType precision = DType::F32;
};

LoadedModel load_any_model(const fs::path& path) {
    LoadedModel lm;
    if (peek_artifact_kind(path) == ArtifactKind::Checkpoint) {
        lm.graph = load_checkpoint(path).graph;
        lm.optimized = false;
        lm.precision = DType::F32;
    } else {
        DeployedModel dm = load_deployed(path);
        lm.graph = dm.to_graph();
        lm.optimized = true;
        lm.precision = dm.precision;
    }
    return lm;
}

json latency_json(const LatencyStats& s) {
    return {{"iterations", s.iterations},
            {"mean_ms", s.mean_ms},
            {"p50_ms", s.p50_ms},
            {"p95_ms", s.p95_ms}};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"edgenet: train, compress and benchmark the gesture-recognition CNN"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read option defaults from a config file (flags win)");

    int threads = 0;
    app.add_option("--threads", threads, "worker thread cap (1 = strict single-threaded)");

    // ---- prepare ----
    auto* prepare = app.add_subcommand("prepare", "resize a class-folder tree to the size variants");
    std::string prep_source, prep_out;
    std::vector<int64_t> prep_sizes{64, 96, 128, 256};
    prepare->add_option("--source", prep_source, "source class-folder tree")->required();
    prepare->add_option("--out", prep_out, "output root for folder_<size> trees")->required();
    prepare->add_option("--sizes", prep_sizes, "target sizes")->delimiter(',');

    // ---- synth ----
    auto* synth = app.add_subcommand("synth", "generate a synthetic gesture dataset");
    std::string synth_out;
    int64_t synth_per_class = 100;
    uint64_t synth_seed = 0;
    SynthOptions synth_opts;
    synth->add_option("--out", synth_out, "output dataset root")->required();
    synth->add_option("--per-class", synth_per_class, "images per class");
    synth->add_option("--size", synth_opts.size, "canvas size");
    synth->add_option("--classes", synth_opts.classes, "class count (2..5)");
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--brightness", synth_opts.brightness_jitter, "brightness jitter range");
    synth->add_option("--rotation", synth_opts.rotation_deg, "rotation range, degrees");
    synth->add_option("--translate", synth_opts.translate_frac, "translation range, canvas fraction");
    synth->add_option("--scale-jitter", synth_opts.scale_jitter, "scale jitter range");
    synth->add_option("--background-amp", synth_opts.background_amp, "background texture amplitude");
    synth->add_option("--noise-sigma", synth_opts.noise_sigma, "additive noise sigma");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train a model on a class-folder dataset");
    std::string train_data, train_out, train_history, train_weights_csv;
    int64_t train_input_size = 96;
    TrainConfig tc;
    train->add_option("--data", train_data, "dataset root (class folders)")->required();
    train->add_option("--out", train_out, "output checkpoint path")->required();
    train->add_option("--input-size", train_input_size, "model input size");
    train->add_option("--seed", tc.seed, "rng seed");
    train->add_option("--batch-size", tc.batch_size, "minibatch size");
    train->add_option("--epochs", tc.max_epochs, "maximum epochs");
    train->add_option("--patience", tc.patience, "early-stopping patience");
    train->add_option("--lr", tc.learning_rate, "adam learning rate");
    train->add_option("--hflip-prob", tc.hflip_prob, "horizontal flip probability");
    train->add_option("--split-fraction", tc.split_fraction, "train fraction of the split");
    train->add_option("--class-weights", train_weights_csv,
                      "comma-separated per-class loss weights (default: 1.2 for one/three/four)");
    train->add_option("--history", train_history, "per-epoch metrics CSV (default <out>.history.csv)");

    // ---- quantize ----
    auto* quant = app.add_subcommand("quantize", "export a deployed model at reduced precision");
    std::string q_model, q_out, q_mode = "i8", q_calib;
    quant->add_option("--model", q_model, "input checkpoint")->required();
    quant->add_option("--out", q_out, "output deployed model")->required();
    quant->add_option("--mode", q_mode, "f32|f16|i8");
    quant->add_option("--calib", q_calib, "representative dataset root (required for i8)");

    // ---- prune ----
    auto* prune = app.add_subcommand("prune", "remove low-ranked conv channels");
    std::string p_model, p_out, p_ranking = "weight-l1", p_calib;
    std::vector<std::string> p_layers;
    prune->add_option("--model", p_model, "input checkpoint")->required();
    prune->add_option("--out", p_out, "output checkpoint")->required();
    prune->add_option("--layer", p_layers, "layer fraction, e.g. conv2=0.25 (repeatable)")
        ->required();
    prune->add_option("--ranking", p_ranking, "weight-l1|activation-l1");
    prune->add_option("--calib", p_calib, "representative dataset (required for activation-l1)");

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "accuracy/loss/confusion of a model on a dataset");
    std::string e_model, e_data, e_out;
    eval->add_option("--model", e_model, "checkpoint or deployed model")->required();
    eval->add_option("--data", e_data, "dataset root")->required();
    eval->add_option("--out", e_out, "run-record JSON output");

    // ---- bench ----
    auto* bench = app.add_subcommand("bench", "per-inference latency of a model");
    std::string b_model, b_out;
    int b_iterations = 50, b_warmup = 5;
    uint64_t b_seed = 0;
    bench->add_option("--model", b_model, "checkpoint or deployed model")->required();
    bench->add_option("--iterations", b_iterations, "timed iterations (>= 30)");
    bench->add_option("--warmup", b_warmup, "warm-up iterations (>= 5)");
    bench->add_option("--seed", b_seed, "input seed");
    bench->add_option("--out", b_out, "run-record JSON output");

    // ---- report ----
    auto* report = app.add_subcommand("report", "aggregate run records into the comparison report");
    std::string r_runs, r_out_dir;
    report->add_option("--runs", r_runs, "directory of eval/bench run records")->required();
    report->add_option("--out-dir", r_out_dir, "report output directory")->required();

    // global flags (--threads, --config) may appear after a subcommand
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (prepare->parsed()) {
            build_size_variants(prep_source, prep_out, prep_sizes);
            json sizes = json::array();
            std::vector<fs::path> outputs;
            for (int64_t s : prep_sizes) {
                sizes.push_back(s);
                outputs.push_back(fs::path(prep_out) / ("folder_" + std::to_string(s)));
            }
            json cfg{{"source", prep_source}, {"out", prep_out}, {"sizes", sizes}};
            // directory outputs carry no checksum; record the manifest next
            // to the output root instead
            json m{{"command", "prepare"}, {"config", cfg}, {"seed", 0},
                   {"inputs", json{{"source", prep_source}}}, {"outputs", json::array()}};
            for (const auto& o : outputs) m["outputs"].push_back(o.string());
            write_text_atomic(fs::path(prep_out) / "prepare.manifest.json", m.dump(2) + "\n");
            std::cout << "prepared " << prep_sizes.size() << " size variants under " << prep_out
                      << "\n";
        } else if (synth->parsed()) {
            LabeledDataset ds = synthesize(synth_per_class, synth_seed, synth_opts);
            write_dataset(ds, synth_out);
            json cfg{{"out", synth_out},
                     {"per_class", synth_per_class},
                     {"size", synth_opts.size},
                     {"classes", synth_opts.classes},
                     {"brightness", synth_opts.brightness_jitter},
                     {"rotation", synth_opts.rotation_deg},
                     {"translate", synth_opts.translate_frac},
                     {"scale_jitter", synth_opts.scale_jitter},
                     {"background_amp", synth_opts.background_amp},
                     {"noise_sigma", synth_opts.noise_sigma}};
            json m{{"command", "synth"},       {"config", cfg},
                   {"seed", synth_seed},       {"inputs", json::object()},
                   {"outputs", json::array({synth_out})}};
            write_text_atomic(fs::path(synth_out) / "synth.manifest.json", m.dump(2) + "\n");
            std::cout << "wrote " << ds.items.size() << " images (" << ds.class_names.size()
                      << " classes) under " << synth_out << "\n";
        } else if (train->parsed()) {
            LabeledDataset ds = scan_class_folders(train_data);
            tc.class_weights = train_weights_csv.empty() ? default_class_weights(ds.class_names)
                                                         : parse_weights(train_weights_csv);
            Rng init_rng(tc.seed);
            ModelGraph graph = build_model<float>(train_input_size, ds.num_classes(), init_rng);

            std::ostringstream metrics;
            auto [ckpt, hist] = fit(std::move(graph), ds, tc, &metrics);
            save_checkpoint(ckpt, train_out);
            const std::string hist_path =
                train_history.empty() ? train_out + ".history.csv" : train_history;
            write_text_atomic(hist_path, metrics.str());

            json weights = json::array();
            for (float w : tc.class_weights) weights.push_back(w);
            json cfg{{"data", train_data},
                     {"out", train_out},
                     {"input_size", train_input_size},
                     {"batch_size", tc.batch_size},
                     {"epochs", tc.max_epochs},
                     {"patience", tc.patience},
                     {"lr", tc.learning_rate},
                     {"hflip_prob", tc.hflip_prob},
                     {"split_fraction", tc.split_fraction},
                     {"class_weights", weights},
                     {"history", hist_path}};
            write_manifest("train", cfg, tc.seed, json{{"data", train_data}},
                           {fs::path(train_out), fs::path(hist_path)});
            std::cout << "trained " << hist.epochs() << " epochs; best epoch "
                      << (ckpt.best_epoch + 1) << " val_loss " << ckpt.best_val_loss
                      << "; checkpoint " << train_out << "\n";
        } else if (quant->parsed()) {
            const DType mode = parse_mode(q_mode);
            Checkpoint ckpt = load_checkpoint(q_model);
            LabeledDataset calib;
            const LabeledDataset* calib_ptr = nullptr;
            if (!q_calib.empty()) {
                calib = scan_class_folders(q_calib);
                calib_ptr = &calib;
            }
            DeployedModel dm = export_deployed(ckpt, mode, calib_ptr);
            save_deployed(dm, q_out);
            json cfg{{"model", q_model}, {"out", q_out}, {"mode", q_mode}, {"calib", q_calib}};
            write_manifest("quantize", cfg, 0, json{{"model", q_model}, {"calib", q_calib}},
                           {fs::path(q_out)});
            std::cout << "wrote " << q_mode << " deployed model " << q_out << " ("
                      << measure_size(q_out) << " bytes)\n";
        } else if (prune->parsed()) {
            std::map<std::string, double> fractions;
            for (const std::string& spec : p_layers) {
                const size_t eq = spec.find('=');
                if (eq == std::string::npos)
                    throw ConfigError("bad --layer '" + spec + "' (want name=fraction)");
                try {
                    fractions[spec.substr(0, eq)] = std::stod(spec.substr(eq + 1));
                } catch (const std::exception&) {
                    throw ConfigError("bad --layer fraction in '" + spec + "'");
                }
            }
            PruneRanking ranking;
            if (p_ranking == "weight-l1") ranking = PruneRanking::WeightL1;
            else if (p_ranking == "activation-l1") ranking = PruneRanking::ActivationL1;
            else throw ConfigError("unknown --ranking '" + p_ranking + "'");

            Checkpoint ckpt = load_checkpoint(p_model);
            LabeledDataset calib;
            const LabeledDataset* calib_ptr = nullptr;
            if (!p_calib.empty()) {
                calib = scan_class_folders(p_calib);
                calib_ptr = &calib;
            }
            const int64_t before = param_count(ckpt.graph);
            Checkpoint pruned = prune_channels(ckpt, fractions, ranking, calib_ptr);
            save_checkpoint(pruned, p_out);
            json cfg{{"model", p_model}, {"out", p_out}, {"ranking", p_ranking}, {"calib", p_calib}};
            cfg["layers"] = json::object();
            for (const auto& [k, v] : fractions) cfg["layers"][k] = v;
            write_manifest("prune", cfg, 0, json{{"model", p_model}}, {fs::path(p_out)});
            std::cout << "pruned " << before << " -> " << param_count(pruned.graph)
                      << " params; checkpoint " << p_out << "\n";
        } else if (eval->parsed()) {
            LoadedModel lm = load_any_model(e_model);
            LabeledDataset ds = scan_class_folders(e_data);
            EvalResult res = evaluate(lm.graph, ds);
            json rec{{"input_size", lm.graph.input_size},
                     {"optimized", lm.optimized},
                     {"precision", dtype_name(lm.precision)},
                     {"loss", res.mean_loss},
                     {"accuracy", res.accuracy},
                     {"n_examples", res.n_examples},
                     {"model_size_bytes", measure_size(e_model)},
                     {"class_names", ds.class_names}};
            json confusion = json::array();
            for (int64_t t = 0; t < res.num_classes; ++t) {
                json row = json::array();
                for (int64_t p = 0; p < res.num_classes; ++p) row.push_back(res.confusion_at(t, p));
                confusion.push_back(row);
            }
            rec["confusion"] = confusion;
            if (!e_out.empty()) {
                write_text_atomic(e_out, rec.dump(2) + "\n");
                json cfg{{"model", e_model}, {"data", e_data}, {"out", e_out}};
                write_manifest("eval", cfg, 0, json{{"model", e_model}, {"data", e_data}},
                               {fs::path(e_out)});
            }
            std::cout << "accuracy " << res.accuracy << " loss " << res.mean_loss << " on "
                      << res.n_examples << " examples\n";
        } else if (bench->parsed()) {
            LoadedModel lm = load_any_model(b_model);
            BenchResult res =
                bench_latency(lm.graph, b_iterations, b_warmup, b_seed, measure_size(b_model));
            json rec{{"input_size", lm.graph.input_size},
                     {"optimized", lm.optimized},
                     {"model_size_bytes", res.model_size_bytes},
                     {"latency", latency_json(res.stats)}};
            if (!b_out.empty()) {
                write_text_atomic(b_out, rec.dump(2) + "\n");
                json cfg{{"model", b_model}, {"iterations", b_iterations}, {"warmup", b_warmup}};
                write_manifest("bench", cfg, b_seed, json{{"model", b_model}}, {fs::path(b_out)});
            }
            std::cout << "latency mean " << res.stats.mean_ms << " ms, p50 " << res.stats.p50_ms
                      << " ms, p95 " << res.stats.p95_ms << " ms over " << b_iterations
                      << " iterations\n";
        } else if (report->parsed()) {
            std::map<std::pair<int64_t, bool>, ReportRow> rows;
            std::vector<fs::path> records;
            for (const auto& entry : fs::directory_iterator(r_runs)) {
                const std::string name = entry.path().filename().string();
                if (entry.path().extension() != ".json") continue;
                if (name.size() > 14 && name.substr(name.size() - 14) == ".manifest.json") continue;
                records.push_back(entry.path());
            }
            std::sort(records.begin(), records.end());
            if (records.empty()) throw ConfigError("no run records under " + r_runs);
            for (const fs::path& p : records) {
                std::ifstream in(p);
                json rec;
                try {
                    in >> rec;
                } catch (const json::parse_error& e) {
                    log_warn("skipping unparsable run record " + p.string() + ": " + e.what());
                    continue;
                }
                if (!rec.contains("input_size") || !rec.contains("optimized")) {
                    log_warn("skipping run record without input_size/optimized: " + p.string());
                    continue;
                }
                const std::pair<int64_t, bool> key{rec["input_size"].get<int64_t>(),
                                                   rec["optimized"].get<bool>()};
                ReportRow& row = rows[key];
                row.input_size = key.first;
                row.optimized = key.second;
                if (rec.contains("accuracy")) {
                    row.loss = rec["loss"].get<double>();
                    row.accuracy = rec["accuracy"].get<double>();
                    row.model_size_bytes = rec["model_size_bytes"].get<uint64_t>();
                } else if (rec.contains("latency")) {
                    LatencyStats ls;
                    ls.iterations = rec["latency"]["iterations"].get<int>();
                    ls.mean_ms = rec["latency"]["mean_ms"].get<double>();
                    ls.p50_ms = rec["latency"]["p50_ms"].get<double>();
                    ls.p95_ms = rec["latency"]["p95_ms"].get<double>();
                    row.latency = ls;
                    if (row.model_size_bytes == 0)
                        row.model_size_bytes = rec["model_size_bytes"].get<uint64_t>();
                }
            }
            std::vector<ReportRow> flat;
            for (auto& [k, v] : rows) flat.push_back(v);
            ReportFiles files = write_report(flat, r_out_dir);
            std::cout << "report over " << flat.size() << " rows: " << files.csv.string() << "\n";
        }
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
