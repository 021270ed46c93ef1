#include "segserve/auth.hpp"
#include "segserve/error.hpp"
#include "segserve/fusion.hpp"
#include "segserve/http_api.hpp"
#include "segserve/image_io.hpp"
#include "segserve/metrics.hpp"
#include "segserve/orchestrator.hpp"
#include "segserve/pipeline.hpp"
#include "segserve/segmentation.hpp"
#include "segserve/store.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace segserve;

namespace {

ApiServer* g_server = nullptr;

extern "C" void handle_signal(int) {
    if (g_server) g_server->stop();
}

Extent parse_extent(const std::string& text) {
    const auto x = text.find('x');
    if (x == std::string::npos) throw CLI::ValidationError("--window", "expected WxH, got '" + text + "'");
    try {
        const long w = std::stol(text.substr(0, x));
        const long h = std::stol(text.substr(x + 1));
        if (w <= 0 || h <= 0) throw CLI::ValidationError("--window", "extents must be positive");
        return {static_cast<std::size_t>(w), static_cast<std::size_t>(h)};
    } catch (const std::logic_error&) {
        throw CLI::ValidationError("--window", "expected WxH, got '" + text + "'");
    }
}

std::pair<std::string, int> parse_addr(const std::string& addr) {
    const auto colon = addr.rfind(':');
    if (colon == std::string::npos) return {"127.0.0.1", std::stoi(addr)};
    return {addr.substr(0, colon), std::stoi(addr.substr(colon + 1))};
}

std::vector<LabeledScore> read_scores_csv(const std::string& path, std::string& error) {
    std::ifstream in(path);
    if (!in) {
        error = "cannot open " + path;
        return {};
    }
    std::string line;
    std::getline(in, line);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "score,label") {
        error = "expected header 'score,label'";
        return {};
    }
    std::vector<LabeledScore> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        try {
            if (comma == std::string::npos) throw std::invalid_argument("missing comma");
            std::size_t used = 0;
            const double score = std::stod(line.substr(0, comma), &used);
            if (used != comma) throw std::invalid_argument("bad score");
            const std::string label = line.substr(comma + 1);
            if (label != "0" && label != "1") throw std::invalid_argument("label must be 0 or 1");
            rows.push_back({score, label == "1"});
        } catch (const std::exception& e) {
            error = "line " + std::to_string(lineno) + ": " + e.what();
            return {};
        }
    }
    return rows;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"segserve: segmentation and dual-modal diagnosis service"};
    app.require_subcommand(1);

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP API with task workers");
    std::string addr = "127.0.0.1:8080";
    std::string data_root = "data";
    std::size_t capacity = 4;
    std::size_t workers = 1;
    std::size_t max_upload = 64u << 20;
    std::vector<std::string> weight_files;
    std::string serve_window = "128x128";
    double serve_theta = 0.5;
    serve->add_option("--addr", addr, "host:port to listen on")->envname("SEGSERVE_ADDR");
    serve->add_option("--data-root", data_root, "Directory for the store, inputs and results")
        ->envname("SEGSERVE_DATA_ROOT");
    serve->add_option("--queue-capacity", capacity, "Execution queue capacity")
        ->envname("SEGSERVE_QUEUE_CAPACITY")
        ->check(CLI::PositiveNumber);
    serve->add_option("--workers", workers, "Worker threads")->envname("SEGSERVE_WORKERS")->check(CLI::PositiveNumber);
    serve->add_option("--max-upload", max_upload, "Upload size limit in bytes")->envname("SEGSERVE_MAX_UPLOAD");
    serve->add_option("--weights", weight_files, "FWT1 weight files overriding the generated ones")
        ->envname("SEGSERVE_WEIGHTS");
    serve->add_option("--window", serve_window, "Sliding window WxH")->envname("SEGSERVE_WINDOW");
    serve->add_option("--theta", serve_theta, "Mask threshold")->envname("SEGSERVE_THETA")->check(CLI::Range(0.0, 1.0));

    // segment
    auto* segment = app.add_subcommand("segment", "Segment an image or MIV1 volume offline");
    std::string seg_in, seg_out;
    std::string seg_window = "128x128";
    double seg_theta = 0.5;
    std::size_t seg_threads = 1;
    segment->add_option("input", seg_in, "PNG, PGM, PPM or MIV1 input")->required()->check(CLI::ExistingFile);
    segment->add_option("output", seg_out, "PGM (2D) or MIV1 (3D) mask output")->required();
    segment->add_option("--window", seg_window, "Sliding window WxH")->envname("SEGSERVE_WINDOW");
    segment->add_option("--theta", seg_theta, "Mask threshold")->envname("SEGSERVE_THETA")->check(CLI::Range(0.0, 1.0));
    segment->add_option("--threads", seg_threads, "Tile evaluation threads")->check(CLI::PositiveNumber);

    // diagnose
    auto* diag = app.add_subcommand("diagnose", "Dual-modal diagnosis of an image pair");
    std::string image_f, image_o, diag_strategy = "feature_weighted", diag_weights;
    std::optional<double> diag_lambda;
    diag->add_option("image_f", image_f, "First modality image")->required()->check(CLI::ExistingFile);
    diag->add_option("image_o", image_o, "Second modality image")->required()->check(CLI::ExistingFile);
    diag->add_option("--strategy", diag_strategy, "concat | feature_weighted | score_weighted")
        ->envname("SEGSERVE_STRATEGY");
    diag->add_option("--lambda", diag_lambda, "Fusion weight in [0,1]")->envname("SEGSERVE_LAMBDA");
    diag->add_option("--weights", diag_weights, "FWT1 weights file (default: generated)")
        ->envname("SEGSERVE_WEIGHTS");

    // metrics
    auto* metrics = app.add_subcommand("metrics", "AUROC, recall and accuracy from a score,label CSV");
    std::string csv_path;
    double threshold = 0.5;
    metrics->add_option("scores", csv_path, "CSV with header score,label")->required();
    metrics->add_option("--threshold", threshold, "Score cut for recall/accuracy")->envname("SEGSERVE_THRESHOLD");

    // gen-weights
    auto* gen = app.add_subcommand("gen-weights", "Write seeded FWT1 weights");
    std::string gen_out, gen_strategy = "feature_weighted";
    std::size_t gen_classes = 3, gen_dim = kDefaultFeatureDim;
    double gen_lambda = 0.5;
    std::uint64_t gen_seed = kProjectionSeed;
    gen->add_option("output", gen_out)->required();
    gen->add_option("--strategy", gen_strategy);
    gen->add_option("--classes", gen_classes)->check(CLI::PositiveNumber);
    gen->add_option("--dim", gen_dim, "Per-modality feature dimension")->check(CLI::PositiveNumber);
    gen->add_option("--lambda", gen_lambda)->check(CLI::Range(0.0, 1.0));
    gen->add_option("--seed", gen_seed);

    // export / import
    auto* exp = app.add_subcommand("export", "Dump users and tasks as JSON lines");
    auto* imp = app.add_subcommand("import", "Load a JSON-lines dump");
    std::string dump_path;
    for (auto* sub : {exp, imp}) {
        sub->add_option("--data-root", data_root)->envname("SEGSERVE_DATA_ROOT");
        sub->add_option("file", dump_path, "Dump file ('-' for stdin/stdout)")->required();
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (*segment) {
            SegmentOptions opts;
            opts.window = parse_extent(seg_window);
            opts.theta = seg_theta;
            opts.threads = seg_threads;
            const SegmentationArtifact a = segment_bytes(read_file(seg_in), opts);
            write_file(seg_out, a.bytes);
            return 0;
        }

        if (*diag) {
            const FusionStrategy strategy = parse_strategy(diag_strategy);
            FusionWeights w = diag_weights.empty()
                                  ? WeightBank::generated().get(strategy)
                                  : load_weights(diag_weights);
            if (w.strategy != strategy && !diag_weights.empty()) {
                std::cerr << "note: weights file is " << to_string(w.strategy) << "; using that strategy\n";
            }
            ModalPair pair{decode_image(read_file(image_f)), decode_image(read_file(image_o))};
            const Diagnosis d = diagnose(pair, w, Lambda(diag_lambda.value_or(w.lambda)));
            nlohmann::json out = {{"label", d.label.name},
                                  {"label_index", d.label.index},
                                  {"scores", std::vector<double>(d.scores.scores().begin(), d.scores.scores().end())},
                                  {"strategy", to_string(w.strategy)}};
            std::cout << out.dump() << '\n';
            return 0;
        }

        if (*metrics) {
            std::string error;
            const auto rows = read_scores_csv(csv_path, error);
            if (!error.empty()) {
                std::cerr << "error: " << error << '\n';
                return 2;
            }
            std::vector<std::size_t> preds, truths;
            for (const auto& r : rows) {
                preds.push_back(r.score >= threshold ? 1 : 0);
                truths.push_back(r.positive ? 1 : 0);
            }
            nlohmann::json out = {{"n", rows.size()},
                                  {"auroc", auroc(rows)},
                                  {"recall", recall(preds, truths, 1)},
                                  {"accuracy", accuracy(preds, truths)},
                                  {"threshold", threshold}};
            std::cout << out.dump() << '\n';
            return 0;
        }

        if (*gen) {
            save_weights(gen_out, generate_weights(parse_strategy(gen_strategy), gen_classes, gen_dim, gen_seed,
                                                   gen_lambda));
            return 0;
        }

        if (*exp || *imp) {
            SqliteStore store(std::filesystem::path(data_root) / "segserve.db");
            if (*exp) {
                if (dump_path == "-") {
                    export_jsonl(store, std::cout);
                } else {
                    std::ofstream out(dump_path);
                    export_jsonl(store, out);
                }
            } else {
                std::size_t n = 0;
                if (dump_path == "-") {
                    n = import_jsonl(store, std::cin);
                } else {
                    std::ifstream in(dump_path);
                    if (!in) throw Error(ErrorCode::NotFound, "cannot open " + dump_path);
                    n = import_jsonl(store, in);
                }
                std::cerr << "imported " << n << " records\n";
            }
            return 0;
        }

        if (*serve) {
            const std::filesystem::path root(data_root);
            std::filesystem::create_directories(root);
            SqliteStore store(root / "segserve.db");
            ResultStore results(root);
            AuthService auth(store);

            WeightBank bank = WeightBank::generated();
            for (const auto& f : weight_files) bank.set(load_weights(f));

            SegmentOptions seg_opts;
            seg_opts.window = parse_extent(serve_window);
            seg_opts.theta = serve_theta;

            Orchestrator orchestrator(store, results, make_default_runner(seg_opts, bank), {capacity, workers});
            orchestrator.start();

            ApiServer server(auth, orchestrator, bank, {root, max_upload});
            const auto [host, port] = parse_addr(addr);
            const int bound = server.bind(host, port);
            if (bound < 0) {
                std::cerr << "error: cannot bind " << addr << '\n';
                return 1;
            }
            std::cerr << "listening on " << host << ':' << bound << '\n';
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            server.listen();
            g_server = nullptr;
            orchestrator.stop();
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << '\n';
        return 1;
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
