// embedkit command line: retrieval/ranking evaluation, geometry diagnostics,
// projection-head training, and translation-score filtering over precomputed
// embedding files. One subcommand per invocation; identical inputs and seed
// produce byte-identical report files.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "embedkit/contrastive.hpp"
#include "embedkit/geometry.hpp"
#include "embedkit/nli.hpp"
#include "embedkit/ranking.hpp"
#include "embedkit/simsearch.hpp"
#include "embedkit/store.hpp"

namespace fs = std::filesystem;
using namespace embedkit;

namespace {

// Stable exit codes (documented in the README):
//   0 success, 1 runtime failure, 2 usage error / unknown subcommand,
//   3 missing input file, 4 invalid parameter value.
constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitMissingFile = 3;
constexpr int kExitBadParameter = 4;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct MissingFile : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct BadParameter : std::runtime_error {
    using std::runtime_error::runtime_error;
};

void require_file(const std::string& path, const char* flag) {
    if (path.empty() || !fs::exists(path))
        throw MissingFile("missing file: '" + path + "' (" + flag + ")");
}

template <typename T>
void require_positive(T value, const char* flag) {
    if (!(value > T{0})) throw BadParameter(std::string("invalid parameter: ") + flag +
                                            " must be positive");
}

Format parse_format(const std::string& name, const std::string& path) {
    if (name == "binary") return Format::Binary;
    if (name == "tsv") return Format::Tsv;
    if (name == "auto") return detect_format(path);
    throw BadParameter("invalid parameter: --format must be auto, binary, or tsv");
}

EmbeddingMatrix load_matrix(const std::string& path, const std::string& format) {
    return load_embeddings(path, parse_format(format, path));
}

std::string join_args(int argc, char** argv) {
    std::string out = fs::path(argv[0]).filename().string();
    for (int i = 1; i < argc; ++i) {
        out.push_back(' ');
        out.append(argv[i]);
    }
    return out;
}

std::string out_path(const std::string& dir, const char* name) {
    return (fs::path(dir) / name).string();
}

void ensure_out_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");
}

// ---- per-subcommand options ----

struct SearchOpts {
    std::string queries, corpus, format = "auto", out = ".";
    std::size_t k = 10;
};

struct EvalRetrievalOpts {
    std::string queries, corpus, qrels, format = "auto", out = ".";
    std::size_t k = 100;
    bool save_run = false;
};

struct EvalRankingOpts {
    std::string listings, queries, docs, format = "auto", out = ".";
    std::optional<std::size_t> truncate;
    bool binary_gains = false;
    std::vector<std::string> compare;
    std::string label_a, label_b;
};

struct DiagnoseOpts {
    std::string queries, docs, qrels, format = "auto", out = ".", label = "model";
    double alpha = 2.0, t = 2.0;
    std::size_t batch_size = 1024;
    std::uint64_t seed = 0;
    std::size_t recall_k = 0;  // 0 disables the recall column
};

struct TrainHeadOpts {
    std::string triplets, embeddings, retained, format = "auto", out = ".";
    double tau = 0.05, lr = 0.1;
    std::size_t epochs = 10, batch_size = 128, d_out = 0;
    std::uint64_t seed = 0;
    bool no_hard_negatives = false;
};

struct FilterNliOpts {
    std::string scores, triplets, aggregate = "min", out = ".";
    double threshold = 0.05;
};

int run_search(const SearchOpts& o, const std::vector<std::string>& header) {
    require_file(o.queries, "--queries");
    require_file(o.corpus, "--corpus");
    require_positive(o.k, "--k");
    ensure_out_dir(o.out);

    const auto queries = load_matrix(o.queries, o.format);
    const auto corpus = load_matrix(o.corpus, o.format);
    const auto runs = top_k(queries, corpus, o.k);
    write_run(out_path(o.out, "run.tsv"), runs, header);
    std::cerr << "searched " << runs.size() << " queries over " << corpus.rows() << " documents\n";
    return kExitOk;
}

int run_eval_retrieval(const EvalRetrievalOpts& o, const std::vector<std::string>& header) {
    require_file(o.queries, "--queries");
    require_file(o.corpus, "--corpus");
    require_file(o.qrels, "--qrels");
    require_positive(o.k, "--k");
    ensure_out_dir(o.out);

    const auto queries = load_matrix(o.queries, o.format);
    const auto corpus = load_matrix(o.corpus, o.format);
    const auto rels = load_relevance(o.qrels);
    const auto runs = top_k(queries, corpus, o.k);
    const auto report = recall_at_k(runs, rels, o.k);
    write_metric_report(out_path(o.out, "retrieval_report.tsv"), report, header);
    if (o.save_run) write_run(out_path(o.out, "run.tsv"), runs, header);
    std::cerr << "recall@" << o.k << " = " << report.mean << " over " << report.per_query.size()
              << " queries\n";
    return kExitOk;
}

int run_eval_ranking(const EvalRankingOpts& o, const std::vector<std::string>& header) {
    ensure_out_dir(o.out);
    if (!o.compare.empty()) {
        require_file(o.compare[0], "--compare");
        require_file(o.compare[1], "--compare");
        const auto report_a = read_metric_report(o.compare[0]);
        const auto report_b = read_metric_report(o.compare[1]);
        if (report_a.per_query.size() != report_b.per_query.size())
            throw std::runtime_error("compare: reports have different query counts");
        std::vector<double> a, b;
        a.reserve(report_a.per_query.size());
        b.reserve(report_a.per_query.size());
        std::unordered_map<std::string, double> b_by_query(report_b.per_query.begin(),
                                                           report_b.per_query.end());
        for (const auto& [query, value] : report_a.per_query) {
            const auto it = b_by_query.find(query);
            if (it == b_by_query.end())
                throw std::runtime_error("compare: query '" + query + "' missing from " +
                                         o.compare[1]);
            a.push_back(value);
            b.push_back(it->second);
        }
        const auto result = paired_t_test(a, b);
        const std::string label_a = o.label_a.empty() ? o.compare[0] : o.label_a;
        const std::string label_b = o.label_b.empty() ? o.compare[1] : o.label_b;
        write_significance(out_path(o.out, "significance.tsv"), label_a, label_b, result, header);
        std::cerr << "t = " << result.t << ", p = " << result.p << " over " << a.size()
                  << " paired queries\n";
        return kExitOk;
    }

    if (o.listings.empty() && o.queries.empty() && o.docs.empty())
        throw UsageError("eval-ranking needs --listings/--queries/--docs or --compare");
    require_file(o.listings, "--listings");
    require_file(o.queries, "--queries");
    require_file(o.docs, "--docs");
    if (o.truncate) require_positive(*o.truncate, "--truncate");

    const auto queries = load_matrix(o.queries, o.format);
    const auto docs = load_matrix(o.docs, o.format);
    const auto listings = load_listings(o.listings, queries, docs);
    const auto report = evaluate_ranking(listings, o.truncate, o.binary_gains);
    write_metric_report(out_path(o.out, "ranking_report.tsv"), report, header);
    std::cerr << "mean ndcg = " << report.mean << " over " << listings.size() << " listings\n";
    return kExitOk;
}

int run_diagnose(const DiagnoseOpts& o, const std::vector<std::string>& header) {
    require_file(o.queries, "--queries");
    require_file(o.docs, "--docs");
    require_file(o.qrels, "--qrels");
    require_positive(o.alpha, "--alpha");
    require_positive(o.t, "--t");
    if (o.batch_size < 2) throw BadParameter("invalid parameter: --batch-size must be >= 2");
    ensure_out_dir(o.out);

    const auto queries = load_matrix(o.queries, o.format);
    const auto docs = load_matrix(o.docs, o.format);
    const auto rels = load_relevance(o.qrels);

    DiagOptions options{o.alpha, o.t, o.batch_size, o.seed};
    const auto report = diagnose(queries, docs, rels, options);

    std::optional<double> recall;
    if (o.recall_k > 0) {
        // restrict retrieval to the judged queries so the recall column is
        // computed over the same population as the geometry metrics
        EmbeddingMatrix judged;
        judged.dims = queries.dims;
        judged.normalized = queries.normalized;
        const auto index = build_id_index(queries);
        for (const auto& q : rels.query_order) {
            const auto it = index.find(q);
            if (it == index.end())
                throw std::runtime_error("diagnose: query '" + q + "' not found in embeddings");
            judged.ids.push_back(q);
            const auto row = queries.row(it->second);
            judged.values.insert(judged.values.end(), row.begin(), row.end());
        }
        const auto runs = top_k(judged, docs, o.recall_k);
        recall = recall_at_k(runs, rels, o.recall_k).mean;
    }

    write_diag_report(out_path(o.out, "diagnostics.tsv"), o.label, report, recall, header);
    std::cerr << "align = " << report.align << ", uniform = " << report.uniform << " ("
              << report.n_pos_pairs << " pairs, " << report.n_data_points << " points)\n";
    return kExitOk;
}

int run_train_head(const TrainHeadOpts& o, const std::vector<std::string>& header) {
    require_file(o.triplets, "--triplets");
    require_file(o.embeddings, "--embeddings");
    if (!o.retained.empty()) require_file(o.retained, "--retained");
    require_positive(o.tau, "--tau");
    require_positive(o.lr, "--lr");
    if (o.batch_size < 2) throw BadParameter("invalid parameter: --batch-size must be >= 2");
    ensure_out_dir(o.out);

    const auto embeddings = load_matrix(o.embeddings, o.format);
    TripletSet triplets = load_triplets(o.triplets, embeddings);
    if (!o.retained.empty())
        triplets = materialize_filtered_triplets(triplets, read_retained_ids(o.retained));
    if (triplets.size() == 0) throw std::runtime_error("train-head: no triplets to train on");

    TrainConfig config;
    config.tau = o.tau;
    config.learning_rate = o.lr;
    config.epochs = o.epochs;
    config.batch_size = o.batch_size;
    config.seed = o.seed;
    config.use_hard_negatives = !o.no_hard_negatives;
    config.d_out = o.d_out;

    const auto result = train_head(triplets, config, [](std::size_t epoch, double loss,
                                                        const ProjectionHead&) {
        std::cerr << "epoch " << (epoch + 1) << " loss " << loss << "\n";
    });

    save_head(result.head, out_path(o.out, "head.emb"));
    write_head_meta(out_path(o.out, "head_meta.tsv"), config, result.epoch_loss, header);
    return kExitOk;
}

int run_filter_nli(const FilterNliOpts& o, const std::vector<std::string>& header) {
    require_file(o.scores, "--scores");
    if (!o.triplets.empty()) require_file(o.triplets, "--triplets");
    if (o.aggregate != "min" && o.aggregate != "mean")
        throw BadParameter("invalid parameter: --aggregate must be min or mean");
    ensure_out_dir(o.out);

    const auto rows = load_scores(o.scores);
    const auto best = select_best_translation(rows);
    write_best_systems(out_path(o.out, "best_systems.tsv"), best, header);

    std::map<std::string, double> sentence_scores;
    for (const auto& [id, s] : best) sentence_scores.emplace(id, s.score);

    std::map<std::string, double> subject = sentence_scores;
    if (!o.triplets.empty()) {
        const auto records = load_triplet_records(o.triplets);
        const auto mode = o.aggregate == "min" ? ScoreAggregate::Min : ScoreAggregate::Mean;
        subject = aggregate_triplet_scores(records, sentence_scores, mode);
    }

    const auto result = filter_by_threshold(subject, o.threshold);
    write_retained_ids(out_path(o.out, "retained_ids.txt"), result.retained, header);
    write_filter_stats(out_path(o.out, "filter_stats.tsv"), result.stats, header);
    if (result.stats.output_count == 0)
        std::cerr << "warning: threshold " << o.threshold << " removed every id\n";
    std::cerr << "retained " << result.stats.output_count << "/" << result.stats.input_count
              << " ids (threshold " << o.threshold << ")\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"evaluation and fine-tuning toolkit for precomputed sentence embeddings"};
    app.set_config("--config", "", "key=value config file; command-line flags take precedence");
    app.require_subcommand(1);

    SearchOpts search_opts;
    auto* search = app.add_subcommand("search", "brute-force cosine top-k retrieval");
    search->add_option("--queries", search_opts.queries, "query embedding file")->required();
    search->add_option("--corpus", search_opts.corpus, "corpus embedding file")->required();
    search->add_option("--k", search_opts.k, "neighbors per query");
    search->add_option("--format", search_opts.format, "embedding format: auto|binary|tsv");
    search->add_option("--out", search_opts.out, "output directory");

    EvalRetrievalOpts retr_opts;
    auto* retr = app.add_subcommand("eval-retrieval", "recall@k of cosine retrieval against qrels");
    retr->add_option("--queries", retr_opts.queries, "query embedding file")->required();
    retr->add_option("--corpus", retr_opts.corpus, "corpus embedding file")->required();
    retr->add_option("--qrels", retr_opts.qrels, "relevance file")->required();
    retr->add_option("--k", retr_opts.k, "retrieval depth");
    retr->add_flag("--save-run", retr_opts.save_run, "also write run.tsv");
    retr->add_option("--format", retr_opts.format, "embedding format: auto|binary|tsv");
    retr->add_option("--out", retr_opts.out, "output directory");

    EvalRankingOpts rank_opts;
    std::size_t truncate_value = 0;
    auto* rank = app.add_subcommand("eval-ranking", "click NDCG of cosine-reranked listings");
    rank->add_option("--listings", rank_opts.listings, "listing file");
    rank->add_option("--queries", rank_opts.queries, "query embedding file");
    rank->add_option("--docs", rank_opts.docs, "doc embedding file");
    auto* trunc_opt = rank->add_option("--truncate", truncate_value, "NDCG truncation depth");
    rank->add_flag("--binary-gains", rank_opts.binary_gains, "collapse gains to 0/1");
    rank->add_option("--compare", rank_opts.compare,
                     "two per-query report files for a paired t-test")
        ->expected(2);
    rank->add_option("--label-a", rank_opts.label_a, "label for the first compared report");
    rank->add_option("--label-b", rank_opts.label_b, "label for the second compared report");
    rank->add_option("--format", rank_opts.format, "embedding format: auto|binary|tsv");
    rank->add_option("--out", rank_opts.out, "output directory");

    DiagnoseOpts diag_opts;
    auto* diag = app.add_subcommand("diagnose", "alignment/uniformity of clicked pairs");
    diag->add_option("--queries", diag_opts.queries, "query embedding file")->required();
    diag->add_option("--docs", diag_opts.docs, "doc embedding file")->required();
    diag->add_option("--qrels", diag_opts.qrels, "positive pairs (gain > 0)")->required();
    diag->add_option("--alpha", diag_opts.alpha, "alignment exponent");
    diag->add_option("--t", diag_opts.t, "uniformity temperature");
    diag->add_option("--batch-size", diag_opts.batch_size, "uniformity batch size");
    diag->add_option("--seed", diag_opts.seed, "shuffle seed");
    diag->add_option("--label", diag_opts.label, "row label in the output");
    diag->add_option("--recall-k", diag_opts.recall_k,
                     "also compute recall@k over the judged queries (0 = off)");
    diag->add_option("--format", diag_opts.format, "embedding format: auto|binary|tsv");
    diag->add_option("--out", diag_opts.out, "output directory");

    TrainHeadOpts train_opts;
    auto* train = app.add_subcommand("train-head", "fit a linear projection head on triplets");
    train->add_option("--triplets", train_opts.triplets, "triplet id file")->required();
    train->add_option("--embeddings", train_opts.embeddings, "embedding file the ids resolve against")
        ->required();
    train->add_option("--retained", train_opts.retained, "optional retained-ids filter file");
    train->add_option("--tau", train_opts.tau, "softmax temperature");
    train->add_option("--lr", train_opts.lr, "learning rate");
    train->add_option("--epochs", train_opts.epochs, "training epochs");
    train->add_option("--batch-size", train_opts.batch_size, "batch size");
    train->add_option("--seed", train_opts.seed, "shuffle/init seed");
    train->add_option("--d-out", train_opts.d_out, "output dims (0 = input dims)");
    train->add_flag("--no-hard-negatives", train_opts.no_hard_negatives,
                    "drop the hard-negative term");
    train->add_option("--format", train_opts.format, "embedding format: auto|binary|tsv");
    train->add_option("--out", train_opts.out, "output directory");

    FilterNliOpts filter_opts;
    auto* filter = app.add_subcommand("filter-nli", "best-of-systems selection and score filtering");
    filter->add_option("--scores", filter_opts.scores, "sentence_id<TAB>system<TAB>score file")
        ->required();
    filter->add_option("--threshold", filter_opts.threshold, "minimum retained score");
    filter->add_option("--triplets", filter_opts.triplets,
                       "triplet id file; filter triplets instead of sentences");
    filter->add_option("--aggregate", filter_opts.aggregate, "triplet score aggregate: min|mean");
    filter->add_option("--out", filter_opts.out, "output directory");

    // let [subcommand] sections in a config file fill subcommand options
    for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
        sub->configurable();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help() << "\n";
        return kExitUsage;
    }

    if (trunc_opt->count() > 0) rank_opts.truncate = truncate_value;

    std::vector<std::string> header{"invocation: " + join_args(argc, argv)};
    if (*diag) header.push_back("seed: " + std::to_string(diag_opts.seed));
    if (*train) header.push_back("seed: " + std::to_string(train_opts.seed));

    try {
        if (*search) return run_search(search_opts, header);
        if (*retr) return run_eval_retrieval(retr_opts, header);
        if (*rank) return run_eval_ranking(rank_opts, header);
        if (*diag) return run_diagnose(diag_opts, header);
        if (*train) return run_train_head(train_opts, header);
        if (*filter) return run_filter_nli(filter_opts, header);
    } catch (const MissingFile& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissingFile;
    } catch (const BadParameter& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitBadParameter;
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    std::cerr << "error: no subcommand\n";
    return kExitUsage;
}
