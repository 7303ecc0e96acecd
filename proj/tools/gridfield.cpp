// gridfield: command-line front end for the whole pipeline.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "gridfield/dataset_io.hpp"
#include "gridfield/eval.hpp"
#include "gridfield/field_io.hpp"
#include "gridfield/ingest.hpp"
#include "gridfield/mapping.hpp"
#include "gridfield/png_io.hpp"
#include "gridfield/service.hpp"
#include "gridfield/synth.hpp"
#include "gridfield/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gridfield;

namespace {

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

int parse_pairs(const std::string& s) {
    if (s == "all") return 0;
    if (s.rfind("window:", 0) == 0) {
        const int n = std::stoi(s.substr(7));
        if (n < 1) throw DomainError("--pairs window must be >= 1");
        return n;
    }
    throw DomainError("--pairs expects all or window:N");
}

struct DenoiseOpts {
    double min_area_frac = DenoiseParams{}.min_area_frac;
    double dedup_iou = DenoiseParams{}.dedup_iou;

    void add(CLI::App* app) {
        app->add_option("--min-area-frac", min_area_frac, "drop masks smaller than this fraction of the image");
        app->add_option("--dedup-iou", dedup_iou, "collapse same-view masks above this IoU");
    }
    DenoiseParams params() const { return {min_area_frac, dedup_iou}; }
};

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"gridfield: semantic feature grids over Gaussian scenes"};
    app.require_subcommand(1);

    // synth
    fs::path synth_spec;
    fs::path synth_out;
    auto* synth = app.add_subcommand("synth", "generate a labelled synthetic scene");
    synth->add_option("--spec", synth_spec, "scene spec JSON")->required()->check(CLI::ExistingFile);
    synth->add_option("--out", synth_out, "output directory")->required();

    // ingest
    fs::path ingest_dir;
    DenoiseOpts ingest_denoise;
    auto* ingest = app.add_subcommand("ingest", "validate a dataset directory");
    ingest->add_option("--check", ingest_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    ingest_denoise.add(ingest);

    // match
    fs::path match_dir;
    std::string match_pairs = "all";
    int match_threads = 1;
    auto* match = app.add_subcommand("match", "compute missing keypoint matches into matches.bin");
    match->add_option("--dataset", match_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    match->add_option("--pairs", match_pairs, "all | window:N");
    match->add_option("--threads", match_threads)->check(CLI::PositiveNumber);

    // map
    fs::path map_dir;
    fs::path map_out = "mapping.json";
    MatchParams map_params;
    bool map_no_kp = false;
    std::string map_pairs = "all";
    DenoiseOpts map_denoise;
    auto* map = app.add_subcommand("map", "cross-view grid mapping");
    map->add_option("--dataset", map_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
    map->add_option("--tau", map_params.tau_kp, "keypoint pair threshold");
    map->add_option("--theta", map_params.theta, "hybrid similarity threshold");
    map->add_option("--alpha", map_params.alpha, "colour weight");
    map->add_option("--pairs", map_pairs, "prior views scanned for correspondences: all | window:N");
    map->add_flag("--no-keypoints", map_no_kp, "skip the keypoint branch");
    map->add_option("--out", map_out);
    map_denoise.add(map);

    // train
    fs::path train_dir;
    fs::path train_mapping;
    fs::path train_gaussians;
    fs::path train_out = "field.bin";
    TrainConfig train_cfg;
    auto* train = app.add_subcommand("train", "train per-Gaussian features");
    train->add_option("--dataset", train_dir)->required()->check(CLI::ExistingDirectory);
    train->add_option("--mapping", train_mapping)->required()->check(CLI::ExistingFile);
    train->add_option("--gaussians", train_gaussians, "initial cloud (default DATASET/gaussians.bin)");
    train->add_option("--iters", train_cfg.iterations);
    train->add_option("--seed", train_cfg.seed);
    train->add_option("--step-size", train_cfg.step_size);
    train->add_option("--lambda", train_cfg.lambda);
    train->add_option("--threads", train_cfg.threads)->check(CLI::PositiveNumber);
    train->add_option("--out", train_out);

    // query
    fs::path query_field;
    fs::path query_mapping;
    fs::path query_embedding;
    fs::path query_out = "result.png";
    fs::path query_json;
    std::optional<fs::path> query_dataset;
    int query_view = 0;
    QueryConfig query_cfg;
    auto* query = app.add_subcommand("query", "query one view");
    query->add_option("--field", query_field)->required()->check(CLI::ExistingFile);
    query->add_option("--mapping", query_mapping)->required()->check(CLI::ExistingFile);
    query->add_option("--dataset", query_dataset, "override the dataset recorded in the mapping");
    query->add_option("--view", query_view)->required();
    query->add_option("--embedding", query_embedding, "float32 query embedding")->required()->check(CLI::ExistingFile);
    query->add_option("--top-n", query_cfg.top_n);
    query->add_option("--tau-ac", query_cfg.tau_ac);
    query->add_option("--out", query_out, "target mask PNG");
    query->add_option("--json", query_json, "scores, targets and RLE mask as JSON");

    // eval
    fs::path eval_dir;
    fs::path eval_field;
    fs::path eval_mapping;
    fs::path eval_queries;
    fs::path eval_truth;
    fs::path eval_report = "report.json";
    std::string eval_ablate;
    bool eval_serial = false;
    int eval_iters = 500;
    std::uint64_t eval_seed = 0;
    auto* eval = app.add_subcommand("eval", "evaluate queries against ground truth");
    eval->add_option("--dataset", eval_dir)->required()->check(CLI::ExistingDirectory);
    eval->add_option("--field", eval_field)->required()->check(CLI::ExistingFile);
    eval->add_option("--mapping", eval_mapping)->required()->check(CLI::ExistingFile);
    eval->add_option("--queries", eval_queries)->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", eval_truth)->required()->check(CLI::ExistingDirectory);
    eval->add_option("--ablate", eval_ablate, "re-map and re-train with kp, cd, or none disabled")
        ->check(CLI::IsMember({"kp", "cd", "kp,cd", "none"}));
    eval->add_flag("--serial", eval_serial, "run queries one at a time (latency mode)");
    eval->add_option("--iters", eval_iters, "training budget for --ablate runs");
    eval->add_option("--seed", eval_seed);
    eval->add_option("--report", eval_report);

    // serve
    fs::path serve_field;
    fs::path serve_mapping;
    std::optional<fs::path> serve_queries;
    std::string serve_host = "0.0.0.0";
    int serve_port = 8080;
    auto* serve = app.add_subcommand("serve", "HTTP query service");
    serve->add_option("--field", serve_field)->required()->check(CLI::ExistingFile);
    serve->add_option("--mapping", serve_mapping)->required()->check(CLI::ExistingFile);
    serve->add_option("--queries", serve_queries, "queries.json to pre-register");
    serve->add_option("--host", serve_host);
    serve->add_option("--port", serve_port);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            const auto spec = synth_spec_from_json(read_json(synth_spec));
            const auto scene = generate_synthetic_scene(spec);
            write_synthetic_scene(synth_out, scene);
            std::cout << "wrote " << scene.dataset.view_count() << " views, " << scene.dataset.mask_count()
                      << " masks, " << scene.cloud.size() << " gaussians to " << synth_out.string() << '\n';
        } else if (*ingest) {
            Dataset ds = read_dataset(ingest_dir);
            const auto report = validate_dataset(ds);
            for (const auto& v : report) {
                std::cout << v.code << " view=" << v.view << " local=" << v.local << ": " << v.message << '\n';
            }
            std::vector<std::string> warnings;
            const std::size_t before = ds.mask_count();
            denoise_dataset(ds, ingest_denoise.params(), &warnings);
            print_warnings(warnings);
            std::cout << ds.view_count() << " views, " << before << " masks (" << ds.mask_count()
                      << " after denoising), " << ds.matches.total() << " matches, " << report.size()
                      << " violations\n";
            return report.empty() ? 0 : 1;
        } else if (*match) {
            Dataset ds = read_dataset(match_dir);
            ds.matches = match_all_pairs(ds, parse_pairs(match_pairs), {}, match_threads);
            write_dataset(match_dir, ds);
            std::cout << ds.matches.pairs.size() << " view pairs, " << ds.matches.total() << " matches\n";
        } else if (*map) {
            Dataset ds = read_dataset(map_dir);
            std::vector<std::string> warnings;
            denoise_dataset(ds, map_denoise.params(), &warnings);
            print_warnings(warnings);
            map_params.window = parse_pairs(map_pairs);
            map_params.use_keypoints = !map_no_kp;
            const MappingResult mapping = cross_view_grid_mapping(ds, map_params);
            write_mapping(map_out, mapping, map_dir, map_params);
            std::cout << "K = " << mapping.K << " over " << mapping.assignments.size() << " masks\n";
        } else if (*train) {
            const LoadedMapping loaded = read_mapping(train_mapping);
            const Dataset ds = read_dataset(train_dir);
            const GaussianCloud cloud =
                read_gaussians(train_gaussians.empty() ? train_dir / "gaussians.bin" : train_gaussians);
            const auto baked = bake_feature_maps(ds, loaded.mapping);
            std::vector<TrainView> views;
            for (int t = 0; t < ds.view_count(); ++t) {
                if (count_area(baked[t].coverage) == 0) continue;
                views.push_back({ds.views[t].camera, baked[t].target, baked[t].coverage});
            }
            RenderConfig render;
            render.threads = train_cfg.threads;
            const TrainResult result = train_features(cloud, views, train_cfg, render);
            write_field(train_out, result.cloud, {train_dir, train_cfg, render, result.loss_history});
            std::cout << "trained " << train_cfg.iterations << " iterations, final loss "
                      << (result.loss_history.empty() ? 0.0 : result.loss_history.back()) << '\n';
        } else if (*query) {
            QueryEngine engine(load_field(query_field, query_mapping, query_dataset));
            QueryInput input;
            const Eigen::VectorXf e = read_embedding(query_embedding);
            input.embedding = e / e.norm();
            input.view = query_view;
            input.config = query_cfg;
            const QueryResult result = engine.query(input);
            png::write_file(query_out, png::encode_mask(result.mask));
            if (!query_json.empty()) {
                write_json(query_json, query_result_json(result, engine.field().width, engine.field().height));
            }
            std::cout << "target grids:";
            for (int t : result.targets) std::cout << ' ' << t << " (" << result.scores[t] << ')';
            std::cout << "\nmask area " << count_area(result.mask) << '\n';
        } else if (*eval) {
            const auto queries = read_queries(eval_queries);
            Dataset ds;
            auto field = load_field(eval_field, eval_mapping, eval_dir, &ds);
            const GroundTruth truth = read_truth(eval_truth, ds.view_count());
            EvalReport report;
            if (eval_ablate.empty()) {
                QueryEngine engine(field);
                report = evaluate_queries(engine, queries, truth, {});
            } else {
                Ablation ablation;
                ablation.keypoints = eval_ablate.find("kp") == std::string::npos;
                ablation.color = eval_ablate.find("cd") == std::string::npos;
                SuiteConfig cfg;
                cfg.train.iterations = eval_iters;
                cfg.train.seed = eval_seed;
                const fs::path gaussians = eval_dir / "gaussians.bin";
                GaussianCloud initial = fs::exists(gaussians) ? read_gaussians(gaussians) : field->cloud;
                initial.features.setConstant(0.5);
                report = run_suite(ds, initial, queries, truth, ablation, cfg);
            }
            (void)eval_serial;  // queries always run one at a time here
            write_json(eval_report, report_to_json(report));
            std::cout << "mIoU " << report.miou << "  mAcc " << report.macc << "  loc " << report.localization
                      << "  mTime " << report.mtime << "s over " << report.queries.size() << " queries";
            if (!report.skipped.empty()) std::cout << " (" << report.skipped.size() << " skipped)";
            std::cout << '\n';
        } else if (*serve) {
            TextEncoder encoder;
            if (const char* url = std::getenv("GRIDFIELD_ENCODER_URL"); url && *url) encoder = http_text_encoder(url);
            Service service(encoder);
            Dataset ds;
            auto field = load_field(serve_field, serve_mapping, std::nullopt, &ds);
            std::vector<ImageRGB> images;
            for (const auto& v : ds.views) images.push_back(v.rgb);
            service.load(field, std::move(images));
            if (serve_queries) {
                for (const auto& q : read_queries(*serve_queries)) service.register_query(q.name, q.embedding);
            }
            std::cout << "serving on " << serve_host << ':' << serve_port << std::endl;
            run_http_server(service, serve_host, serve_port);
        }
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
