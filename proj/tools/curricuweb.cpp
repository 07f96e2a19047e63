// curricuweb: command-line front end for the web-assisted curriculum
// training pipeline. Each subcommand runs one stage on files so stages can
// be composed; `run` chains them.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "curricuweb/curriculum.hpp"
#include "curricuweb/dataset.hpp"
#include "curricuweb/errors.hpp"
#include "curricuweb/eval.hpp"
#include "curricuweb/parallel.hpp"
#include "curricuweb/pipeline.hpp"
#include "curricuweb/relevance.hpp"
#include "curricuweb/synthetic.hpp"
#include "curricuweb/webquery.hpp"
#include "curricuweb/wsddn.hpp"

using namespace curricuweb;

namespace {

std::vector<std::string> split_classes(const std::string& csv) {
    if (csv.empty()) return voc_classes();
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void add_train_options(CLI::App* cmd, TrainConfig& t) {
    cmd->add_option("--lr", t.learning_rate, "SGD learning rate")->capture_default_str();
    cmd->add_option("--epochs", t.epochs_per_stage, "Epochs per curriculum stage")->capture_default_str();
    cmd->add_option("--weight-decay", t.weight_decay, "L2 weight decay")->capture_default_str();
    cmd->add_option("--seed", t.seed, "Random seed")->capture_default_str();
    cmd->add_option("--epsilon", t.epsilon_clip, "Log-argument clip")->capture_default_str();
}

void add_self_train_options(CLI::App* cmd, SelfTrainConfig& s) {
    cmd->add_option("--seeds-per-label", s.seeds_per_label, "Seeds taken from each base query")->capture_default_str();
    cmd->add_option("--seeds-per-attribute", s.seeds_per_attribute_query, "Seeds taken from each attributed query")
        ->capture_default_str();
    cmd->add_option("--confidence", s.confidence_add_threshold, "Logit needed to join the pool")->capture_default_str();
    cmd->add_option("--iterations", s.max_iterations, "Maximum self-training iterations")->capture_default_str();
    cmd->add_option("--st-lr", s.learning_rate, "Classifier learning rate")->capture_default_str();
    cmd->add_option("--st-epochs", s.epochs_per_iteration, "Classifier epochs per iteration")->capture_default_str();
    cmd->add_option("--st-seed", s.seed, "Classifier seed")->capture_default_str();
}

void add_edge_options(CLI::App* cmd, EdgeConfig& e) {
    cmd->add_option("--sigma", e.sigma, "LoG sigma")->capture_default_str();
    cmd->add_option("--radius", e.kernel_radius, "LoG kernel radius")->capture_default_str();
    cmd->add_option("--zc-threshold", e.zc_threshold, "Zero-crossing magnitude threshold")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Easy-to-hard weakly supervised detection with web images"};
    app.require_subcommand(1);

    // build-queries
    std::string classes_csv;
    auto* build_queries = app.add_subcommand("build-queries", "Print the attribute-expanded search queries");
    build_queries->add_option("--classes", classes_csv, "Comma-separated classes (default: the 20 VOC classes)");

    // crawl
    std::string fixtures, crawl_out;
    std::uint32_t limit = 100, related_limit = 20;
    auto* crawl = app.add_subcommand("crawl", "Collect web records from a search backend fixture");
    crawl->add_option("--fixtures", fixtures, "Fixture file or directory")->required();
    crawl->add_option("--classes", classes_csv, "Comma-separated classes (default: the 20 VOC classes)");
    crawl->add_option("--limit", limit, "Results kept per query")->capture_default_str();
    crawl->add_option("--related-limit", related_limit, "Related images per seed (0 disables)")->capture_default_str();
    crawl->add_option("--out", crawl_out, "Output manifest")->required();

    // score-relevance
    std::string rel_mode = "semantic", rel_features, rel_manifest, rel_out;
    std::uint32_t knn_k = 10, pca_dim = 64;
    SelfTrainConfig st_cfg;
    auto* score_rel = app.add_subcommand("score-relevance", "Write relevance scores for web records");
    score_rel->add_option("--mode", rel_mode, "semantic | knn")->check(CLI::IsMember({"semantic", "knn"}));
    score_rel->add_option("--features", rel_features, "Image features, one row per manifest record")->required();
    score_rel->add_option("--manifest", rel_manifest, "Input manifest")->required();
    score_rel->add_option("--out", rel_out, "Output manifest")->required();
    score_rel->add_option("--k", knn_k, "Neighbours per target image")->capture_default_str();
    score_rel->add_option("--pca-dim", pca_dim, "PCA dimensions")->capture_default_str();
    add_self_train_options(score_rel, st_cfg);

    // edge-score
    std::string edge_in, edge_out;
    EdgeConfig edge_cfg;
    std::uint32_t resize = 600;
    auto* edge_score = app.add_subcommand("edge-score", "Write mean-edge-strength difficulty for PGM images");
    edge_score->add_option("--images", edge_in, "Manifest whose paths are PGM images")->required();
    edge_score->add_option("--out", edge_out, "Output manifest")->required();
    edge_score->add_option("--resize", resize, "Longer image side before scoring (0 keeps size)")->capture_default_str();
    add_edge_options(edge_score, edge_cfg);

    // make-schedule
    std::string variant_name = "WSDDN", schedule_out;
    double threshold = 8.0;
    std::uint32_t num_regions = 5;
    auto* make_sched = app.add_subcommand("make-schedule", "Write the curriculum schedule of a variant");
    make_sched->add_option("--variant", variant_name, "WSDDN | CurrWSDDN | WebRel | WebETH | WebRelETH | WebRelETC")
        ->capture_default_str();
    make_sched->add_option("--threshold", threshold, "Semantic relevance threshold")->capture_default_str();
    make_sched->add_option("--regions", num_regions, "Curriculum regions")->capture_default_str();
    make_sched->add_option("--out", schedule_out, "Output file (default: stdout)");

    // train
    std::string tr_manifest, tr_regions, tr_features, tr_schedule, tr_out;
    TrainConfig tr_cfg;
    auto* train_cmd = app.add_subcommand("train", "Train the two-stream head under a schedule");
    train_cmd->add_option("--manifest", tr_manifest, "Manifest")->required();
    train_cmd->add_option("--regions", tr_regions, "Regions file")->required();
    train_cmd->add_option("--features", tr_features, "Region features (FVEC)")->required();
    train_cmd->add_option("--schedule", tr_schedule, "Schedule file")->required();
    train_cmd->add_option("--out", tr_out, "Output weights")->required();
    add_train_options(train_cmd, tr_cfg);

    // evaluate
    std::string ev_dets, ev_gt;
    double ev_iou = 0.5;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Per-class AP and mAP of a detections file");
    evaluate_cmd->add_option("--detections", ev_dets, "Detections file")->required();
    evaluate_cmd->add_option("--groundtruth", ev_gt, "Ground-truth file")->required();
    evaluate_cmd->add_option("--iou", ev_iou, "IoU needed for a true positive")->capture_default_str();

    // run
    PipelineConfig pc;
    std::string run_variant = "WSDDN", run_mode = "semantic";
    auto* run = app.add_subcommand("run", "Full pipeline: relevance, difficulty, schedule, training, evaluation");
    run->add_option("--variant", run_variant, "Experiment variant")->capture_default_str();
    run->add_option("--manifest", pc.manifest, "Manifest")->required();
    run->add_option("--image-features", pc.image_features, "Image features for relevance scoring");
    run->add_option("--regions", pc.regions, "Regions file")->required();
    run->add_option("--region-features", pc.region_features, "Region features (FVEC)")->required();
    run->add_option("--groundtruth", pc.ground_truth, "Ground truth of the test split")->required();
    run->add_option("--out-dir", pc.output_dir, "Output directory")->required();
    run->add_option("--relevance", run_mode, "manifest | semantic | knn")
        ->check(CLI::IsMember({"manifest", "semantic", "knn"}))
        ->capture_default_str();
    run->add_option("--threshold", pc.relevance_threshold, "Semantic relevance threshold")->capture_default_str();
    run->add_option("--k", pc.knn_k, "Neighbours per target image")->capture_default_str();
    run->add_option("--pca-dim", pc.pca_dim, "PCA dimensions")->capture_default_str();
    run->add_option("--regions-count", pc.num_regions, "Curriculum regions")->capture_default_str();
    run->add_option("--resize", pc.resize_longer_side, "Longer image side before edge scoring")->capture_default_str();
    run->add_option("--nms", pc.nms_threshold, "NMS IoU threshold")->capture_default_str();
    run->add_option("--iou", pc.eval_iou, "Evaluation IoU threshold")->capture_default_str();
    add_train_options(run, pc.train);
    add_self_train_options(run, pc.self_train);
    add_edge_options(run, pc.edge);

    // gen-synthetic
    SyntheticSpec spec;
    std::string synth_dir;
    auto* gen = app.add_subcommand("gen-synthetic", "Write a synthetic web + target dataset");
    gen->add_option("--out-dir", synth_dir, "Output directory")->required();
    gen->add_option("--classes", spec.classes, "Number of classes")->capture_default_str();
    gen->add_option("--images-per-class", spec.images_per_class, "Target train images per class")->capture_default_str();
    gen->add_option("--test-images-per-class", spec.test_images_per_class, "Target test images per class")
        ->capture_default_str();
    gen->add_option("--web-per-class", spec.web_per_class, "Web images per class")->capture_default_str();
    gen->add_option("--web-outliers-per-class", spec.web_outliers_per_class, "Mislabelled web images per class")
        ->capture_default_str();
    gen->add_option("--regions-per-image", spec.regions_per_image, "Regions of a hard image")->capture_default_str();
    gen->add_option("--dim", spec.dim, "Feature dimension")->capture_default_str();
    gen->add_option("--easy-fraction", spec.easy_fraction, "Fraction of easy target images")->capture_default_str();
    gen->add_option("--noise", spec.noise, "Feature noise stddev")->capture_default_str();
    gen->add_option("--signal", spec.signal, "Signature vector norm")->capture_default_str();
    gen->add_option("--seed", spec.seed, "Random seed")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*build_queries) {
            for (const auto& q : expand_queries(split_classes(classes_csv), default_attribute_table()))
                std::cout << to_string(q.kind) << '\t' << q.cls << '\t' << q.text << '\n';
        } else if (*crawl) {
            const auto classes = split_classes(classes_csv);
            FixtureSearchClient client(fixtures);
            std::vector<SearchResult> results;
            for (const auto& q : expand_queries(classes, default_attribute_table())) {
                auto r = fetch(client, q, limit);
                if (r.empty()) std::cerr << "warning: query '" << q.text << "' returned no results\n";
                results.insert(results.end(), r.begin(), r.end());
            }
            if (related_limit > 0 && !results.empty()) {
                const std::vector<SearchResult> seeds = results;
                auto rel = expand_related(client, seeds, related_limit);
                for (const auto& w : rel.warnings) std::cerr << "warning: " << w << '\n';
                results.insert(results.end(), rel.results.begin(), rel.results.end());
            }
            const auto records = dedup_and_manifest(results, classes);
            write_manifest_file(crawl_out, records);
            std::cout << "wrote " << records.size() << " web records from " << results.size() << " results\n";
        } else if (*score_rel) {
            auto records = load_manifest_file(rel_manifest);
            const FeatureBlob features = read_feature_blob_file(rel_features);
            if (features.count() != records.size())
                throw ConfigError(fmt::format("features have {} rows for {} records", features.count(), records.size()));
            std::vector<ImageRecord> web, target;
            std::vector<float> web_rows, target_rows;
            for (std::size_t i = 0; i < records.size(); ++i) {
                if (records[i].split != Split::train) continue;
                const auto row = features.row(i);
                auto& rows = records[i].source == Source::web ? web_rows : target_rows;
                rows.insert(rows.end(), row.begin(), row.end());
                (records[i].source == Source::web ? web : target).push_back(records[i]);
            }
            const FeatureBlob web_blob(std::uint32_t(web.size()), features.dim(), web_rows);
            if (rel_mode == "semantic") {
                const auto seeds = select_seeds(web, st_cfg);
                for (const auto& w : seeds.warnings) std::cerr << "warning: " << w << '\n';
                const auto st = self_train(web_blob, web, seeds.seeds, st_cfg);
                apply_scores(records, st.scores);
                std::cout << "self-training: " << st.iterations << " iterations, "
                          << (st.stabilized ? "stabilized" : "iteration cap reached") << '\n';
            } else {
                const FeatureBlob target_blob(std::uint32_t(target.size()), features.dim(), target_rows);
                std::vector<float> all = web_rows;
                all.insert(all.end(), target_rows.begin(), target_rows.end());
                const FeatureBlob all_blob(std::uint32_t(web.size() + target.size()), features.dim(), all);
                const PcaModel pca = fit_pca(l2_normalize(all_blob), pca_dim);
                const auto members = knn_relevance(target, target_blob, web, web_blob, pca, knn_k);
                apply_membership(records, members);
                std::cout << members.size() << " of " << web.size() << " web records are kNN-relevant\n";
            }
            write_manifest_file(rel_out, records);
        } else if (*edge_score) {
            auto records = load_manifest_file(edge_in);
            std::vector<double> scores(records.size());
            parallel_for(records.size(), [&](std::size_t i) {
                GrayImage img = read_pgm(records[i].path);
                if (resize > 0) img = resize_longer_side(img, resize);
                scores[i] = mean_edge_strength(img, edge_cfg);
            });
            for (std::size_t i = 0; i < records.size(); ++i) records[i].difficulty = scores[i];
            write_manifest_file(edge_out, records);
        } else if (*make_sched) {
            const auto schedule = make_schedule(parse_variant(variant_name), threshold, num_regions);
            if (schedule_out.empty())
                write_schedule(std::cout, schedule);
            else
                write_schedule_file(schedule_out, schedule);
        } else if (*train_cmd) {
            const auto records = load_manifest_file(tr_manifest);
            const auto regions = index_regions(load_regions_file(tr_regions));
            const FeatureBlob features = read_feature_blob_file(tr_features);
            const auto schedule = load_schedule_file(tr_schedule);
            DifficultyRanking ranking;
            const bool needs_rank = std::any_of(schedule.stages.begin(), schedule.stages.end(),
                                                [](const Stage& s) { return s.difficulty_region.has_value(); });
            if (needs_rank) {
                std::vector<ImageRecord> targets;
                for (const auto& r : records)
                    if (r.source == Source::target && r.split == Split::train) targets.push_back(r);
                ranking = rank_by_difficulty(targets);
            }
            const auto classes = collect_classes(records);
            const auto result = train(TrainingData{records, &regions, &features, classes}, schedule, ranking, tr_cfg);
            write_weights_file(tr_out, result.weights);
            for (std::size_t s = 0; s < result.epoch_loss.size(); ++s) {
                std::cout << "stage " << s + 1 << " admitted " << result.stage_admitted[s] << '\n';
                for (std::size_t e = 0; e < result.epoch_loss[s].size(); ++e)
                    std::cout << fmt::format("loss {} {} {:.9g}\n", s + 1, e + 1, result.epoch_loss[s][e]);
            }
        } else if (*evaluate_cmd) {
            const auto report = evaluate(load_detections_file(ev_dets), load_ground_truth_file(ev_gt), ev_iou);
            for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
            print_evaluation(std::cout, report);
        } else if (*run) {
            pc.variant = parse_variant(run_variant);
            pc.relevance_mode = parse_relevance_mode(run_mode);
            const RunReport report = run_pipeline(pc);
            std::cout << format_report(report);
        } else if (*gen) {
            const auto paths = write_synthetic(synth_dir, gen_synthetic(spec));
            std::cout << "manifest " << paths.manifest << '\n'
                      << "image_features " << paths.image_features << '\n'
                      << "regions " << paths.regions << '\n'
                      << "region_features " << paths.region_features << '\n'
                      << "groundtruth " << paths.ground_truth << '\n';
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.family());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
