#pragma once

#include <CLI11.hpp>
#include <chrono>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sco/cluster_oracle.hpp"
#include "sco/dot_oracle.hpp"
#include "sco/eval.hpp"
#include "sco/exact_oracle.hpp"
#include "sco/graph.hpp"

namespace sco::cli {

using nlohmann::json;

struct CommonParams {
    int k = 2;
    double phi = 1.0;
    double eps = 0.0;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    ParamOverrides overrides;
    std::optional<double> theta;

    OracleParams materialize(std::uint32_t n) const {
        return default_params(n, k, phi, eps, gamma, overrides);
    }
};

namespace detail {

inline void add_param_options(CLI::App* cmd, CommonParams& p, bool need_k = true) {
    auto* k_opt = cmd->add_option("--k", p.k, "number of clusters");
    if (need_k) k_opt->required();
    cmd->add_option("--phi", p.phi, "inner conductance of the assumed clustering");
    cmd->add_option("--eps", p.eps, "outer conductance of the assumed clustering");
    cmd->add_option("--gamma", p.gamma, "cluster balance parameter");
    cmd->add_option("--seed", p.seed, "master seed");
    cmd->add_option("--theta", [&p](const std::vector<std::string>& v) {
        p.theta = std::stod(v.at(0));
        return true;
    }, "similarity threshold (default: analytic formula)");
    auto opt = [&p, cmd](const char* name, auto member, const char* help) {
        cmd->add_option(name, [&p, member](const std::vector<std::string>& v) {
            (p.overrides.*member) = static_cast<std::decay_t<decltype((p.overrides.*member).value())>>(
                std::stoull(v.at(0)));
            return true;
        }, help);
    };
    opt("--t", &ParamOverrides::t, "walk length override");
    opt("--s", &ParamOverrides::s, "clustering sample size override");
    opt("--s-oracle", &ParamOverrides::s_oracle, "oracle sample size override");
    opt("--r-init", &ParamOverrides::r_init, "preprocessing walk count override");
    opt("--r-query", &ParamOverrides::r_query, "query walk count override");
    opt("--reps", &ParamOverrides::reps, "median repetition override");
    cmd->add_flag_callback("--cache-alpha", [&p] { p.overrides.cache_alpha = true; },
                           "reuse query vectors across dot products");
}

inline void seed_into_overrides(CommonParams& p) { p.overrides.master_seed = p.seed; }

inline std::vector<GridEntry> load_grid(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read grid file " + path);
    std::vector<GridEntry> grid;
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::istringstream ls(line);
        GridEntry e;
        if (ls >> e.t >> e.s_oracle >> e.r_init >> e.r_query) {
            ls >> e.reps;  // optional
            grid.push_back(e);
        }
    }
    if (grid.empty()) throw IoError("grid file has no entries: " + path);
    return grid;
}

inline void print_confusion_csv(std::ostream& out, const std::vector<std::vector<std::uint64_t>>& m) {
    out << "predicted\\truth";
    for (std::size_t b = 0; b < m.size(); ++b) out << ',' << b;
    out << '\n';
    for (std::size_t a = 0; a < m.size(); ++a) {
        out << a;
        for (std::size_t b = 0; b < m.size(); ++b) out << ',' << m[a][b];
        out << '\n';
    }
}

}  // namespace detail

/// Routes a full argv (without the program name) to the subcommands.
/// Returns 0 on success, 1 on a domain failure, 2 on a usage error.
inline int dispatch(std::vector<std::string> args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"sublinear spectral clustering oracle"};
    app.require_subcommand(1);
    bool as_json = false;
    app.add_flag("--json", as_json, "machine-readable reports");

    // --- gen-sbm ---
    struct {
        std::uint32_t n = 0;
        int k = 0;
        double p = 0, q = 0;
        std::uint64_t seed = 0;
        std::string output, truth;
        std::vector<std::uint32_t> sizes;
    } gen;
    auto* gen_cmd = app.add_subcommand("gen-sbm", "generate a stochastic block model graph");
    gen_cmd->add_option("--n", gen.n)->required();
    gen_cmd->add_option("--k", gen.k)->required();
    gen_cmd->add_option("--p", gen.p, "intra-cluster edge probability")->required();
    gen_cmd->add_option("--q", gen.q, "inter-cluster edge probability")->required();
    gen_cmd->add_option("--seed", gen.seed);
    gen_cmd->add_option("--out", gen.output)->required();
    gen_cmd->add_option("--truth", gen.truth, "ground-truth label file (default <out>.labels)");
    gen_cmd->add_option("--sizes", gen.sizes, "explicit cluster sizes");

    // --- preprocess ---
    struct {
        std::string graph, output;
        CommonParams params;
    } pre;
    auto* pre_cmd = app.add_subcommand("preprocess", "build the clustering oracle");
    pre_cmd->add_option("--graph", pre.graph)->required();
    pre_cmd->add_option("--out", pre.output)->required();
    detail::add_param_options(pre_cmd, pre.params);

    // --- query ---
    struct {
        std::string graph, oracle;
        std::vector<std::uint32_t> vertices;
    } qry;
    auto* qry_cmd = app.add_subcommand("query", "answer cluster-membership queries");
    qry_cmd->add_option("--graph", qry.graph)->required();
    qry_cmd->add_option("--oracle", qry.oracle)->required();
    qry_cmd->add_option("--vertex", qry.vertices, "vertex id (repeatable)")->required();

    // --- query-all ---
    struct {
        std::string graph, oracle, out_labels;
    } qall;
    auto* qall_cmd = app.add_subcommand("query-all", "label every vertex");
    qall_cmd->add_option("--graph", qall.graph)->required();
    qall_cmd->add_option("--oracle", qall.oracle)->required();
    qall_cmd->add_option("--out-labels", qall.out_labels)->required();

    // --- tune ---
    struct {
        std::string graph, truth, grid, output;
        CommonParams params;
        std::uint32_t pairs = 200;
    } tune;
    auto* tune_cmd = app.add_subcommand("tune", "density-gap parameter scan");
    tune_cmd->add_option("--graph", tune.graph)->required();
    tune_cmd->add_option("--truth", tune.truth)->required();
    tune_cmd->add_option("--grid-file", tune.grid)->required();
    tune_cmd->add_option("--out", tune.output)->required();
    tune_cmd->add_option("--pairs", tune.pairs, "intra/inter sample pairs per entry");
    detail::add_param_options(tune_cmd, tune.params);

    // --- evaluate ---
    struct {
        std::string graph, oracle, truth, output;
    } ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "misclassification error of a stored oracle");
    ev_cmd->add_option("--graph", ev.graph)->required();
    ev_cmd->add_option("--oracle", ev.oracle)->required();
    ev_cmd->add_option("--truth", ev.truth)->required();
    ev_cmd->add_option("--out", ev.output, "report file (default stdout)");

    // --- robustness ---
    struct {
        std::string graph, truth;
        std::uint32_t delnum = 0;
        int trials = 5;
        CommonParams params;
    } rob;
    auto* rob_cmd = app.add_subcommand("robustness", "error under per-cluster edge deletions");
    rob_cmd->add_option("--graph", rob.graph)->required();
    rob_cmd->add_option("--truth", rob.truth)->required();
    rob_cmd->add_option("--delnum", rob.delnum)->required();
    rob_cmd->add_option("--trials", rob.trials);
    detail::add_param_options(rob_cmd, rob.params);

    // --- audit ---
    struct {
        std::string graph, truth;
        int k = 0;
        std::optional<double> alpha, beta;
        std::uint32_t perturb_delnum = 0;
        std::uint64_t perturb_seed = 0;
    } aud;
    auto* aud_cmd = app.add_subcommand("audit", "exact spectral checks of the embedding inequalities");
    aud_cmd->add_option("--graph", aud.graph)->required();
    aud_cmd->add_option("--truth", aud.truth)->required();
    aud_cmd->add_option("--k", aud.k)->required();
    aud_cmd->add_option("--alpha", [&aud](const std::vector<std::string>& v) {
        aud.alpha = std::stod(v.at(0));
        return true;
    }, "norm-set parameter (default from eps/phi)");
    aud_cmd->add_option("--beta", [&aud](const std::vector<std::string>& v) {
        aud.beta = std::stod(v.at(0));
        return true;
    }, "center-set parameter (default from eps/phi)");
    aud_cmd->add_option("--perturb-delnum", aud.perturb_delnum, "also audit edge-deletion stability");
    aud_cmd->add_option("--perturb-seed", aud.perturb_seed);

    // --- bench-access ---
    struct {
        std::string graph;
        std::uint32_t queries = 0;
        CommonParams params;
    } bench;
    auto* bench_cmd = app.add_subcommand("bench-access", "edge-access fraction vs query count");
    bench_cmd->add_option("--graph", bench.graph)->required();
    bench_cmd->add_option("--queries", bench.queries)->required();
    detail::add_param_options(bench_cmd, bench.params);

    try {
        std::reverse(args.begin(), args.end());
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen_cmd) {
            auto [g, truth] = generate_sbm(gen.n, gen.k, gen.p, gen.q, gen.sizes, gen.seed);
            save_graph(g, gen.output);
            save_partition(truth, gen.truth.empty() ? gen.output + ".labels" : gen.truth);
            out << "n=" << g.n() << " d=" << g.d() << " edges=" << g.edge_count() << '\n';
        } else if (*pre_cmd) {
            detail::seed_into_overrides(pre.params);
            Graph g = load_graph(pre.graph);
            RegularView rv(g);
            AccessCounter counter(g);
            OracleParams params = pre.params.materialize(g.n());
            auto t0 = std::chrono::steady_clock::now();
            OracleState state = construct_oracle(rv, counter, params, pre.params.theta);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            save_state(state, pre.output);
            if (as_json) {
                json j{{"theta", state.theta},
                       {"components", state.k},
                       {"sample_size", state.sample_multiset.size()},
                       {"distinct_samples", state.nodes.size()},
                       {"construct_seconds", secs},
                       {"edge_access_fraction", edge_access_fraction(counter, g)},
                       {"seed", params.master_seed}};
                out << j.dump(2) << '\n';
            } else {
                out << "theta=" << state.theta << '\n'
                    << "components=" << state.k << '\n'
                    << "sample_size=" << state.sample_multiset.size() << '\n'
                    << "construct_seconds=" << secs << '\n'
                    << "edge_access_fraction=" << edge_access_fraction(counter, g) << '\n'
                    << "seed=" << params.master_seed << '\n';
            }
        } else if (*qry_cmd) {
            Graph g = load_graph(qry.graph);
            RegularView rv(g);
            AccessCounter counter(g);
            OracleState state = load_state(qry.oracle, g);
            auto outlier_root = StreamKey::root(state.sketch.params.master_seed).child("outlier");
            for (Vertex x : qry.vertices) {
                if (x >= g.n()) throw std::invalid_argument("query: vertex out of range");
                out << x << ' ' << which_cluster(rv, counter, state, x, outlier_root.child(x)) << '\n';
            }
        } else if (*qall_cmd) {
            Graph g = load_graph(qall.graph);
            RegularView rv(g);
            AccessCounter counter(g);
            OracleState state = load_state(qall.oracle, g);
            auto labels = query_all(rv, counter, state, state.sketch.params.cache_alpha);
            Partition pred{state.k, labels};
            save_partition(pred, qall.out_labels);
            out << "labeled=" << labels.size() << '\n';
        } else if (*tune_cmd) {
            detail::seed_into_overrides(tune.params);
            Graph g = load_graph(tune.graph);
            Partition truth = load_partition(tune.truth);
            RegularView rv(g);
            AccessCounter counter(g);
            OracleParams base = tune.params.materialize(g.n());
            DensityScan scan =
                density_gap_tune(rv, counter, truth, base, detail::load_grid(tune.grid), tune.pairs);
            std::ofstream report(tune.output);
            if (!report) throw IoError("cannot write " + tune.output);
            write_density_scan(report, scan);
            const auto& best = scan.best();
            if (as_json) {
                json j{{"chosen_entry", scan.chosen},
                       {"theta", scan.chosen_theta},
                       {"gap_score", best.gap_score},
                       {"t", best.entry.t},
                       {"s_oracle", best.entry.s_oracle},
                       {"r_init", best.entry.r_init},
                       {"r_query", best.entry.r_query},
                       {"reps", best.entry.reps}};
                out << j.dump(2) << '\n';
            } else {
                out << "chosen_entry=" << scan.chosen << '\n'
                    << "theta=" << scan.chosen_theta << '\n'
                    << "gap_score=" << best.gap_score << '\n';
            }
        } else if (*ev_cmd) {
            Graph g = load_graph(ev.graph);
            Partition truth = load_partition(ev.truth);
            RegularView rv(g);
            AccessCounter counter(g);
            OracleState state = load_state(ev.oracle, g);
            auto t0 = std::chrono::steady_clock::now();
            auto labels = query_all(rv, counter, state, state.sketch.params.cache_alpha);
            double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            ErrorResult res = misclassification_error(labels, truth.assign, state.k);
            std::ostringstream report;
            if (as_json) {
                json j{{"error", res.error},
                       {"permutation", res.permutation},
                       {"confusion", res.confusion},
                       {"edge_access_fraction", edge_access_fraction(counter, g)},
                       {"query_sweep_seconds", secs},
                       {"mean_query_seconds", secs / g.n()},
                       {"seed", state.sketch.params.master_seed}};
                report << j.dump(2) << '\n';
            } else {
                report << "error=" << res.error << '\n'
                       << "edge_access_fraction=" << edge_access_fraction(counter, g) << '\n'
                       << "query_sweep_seconds=" << secs << '\n'
                       << "mean_query_seconds=" << secs / g.n() << '\n'
                       << "seed=" << state.sketch.params.master_seed << '\n';
                detail::print_confusion_csv(report, res.confusion);
            }
            if (ev.output.empty()) {
                out << report.str();
            } else {
                std::ofstream f(ev.output);
                if (!f) throw IoError("cannot write " + ev.output);
                f << report.str();
                out << "error=" << res.error << '\n';
            }
        } else if (*rob_cmd) {
            detail::seed_into_overrides(rob.params);
            Graph g = load_graph(rob.graph);
            Partition truth = load_partition(rob.truth);
            OracleParams params = rob.params.materialize(g.n());
            double theta = rob.params.theta
                               ? *rob.params.theta
                               : threshold_theta(g.n(), params.k, params.gamma, params.eps, params.phi,
                                                 params.xi);
            RobustnessResult res = robustness_experiment(g, truth, rob.delnum, rob.trials, params, theta);
            if (as_json) {
                json j{{"delnum", rob.delnum},
                       {"trials", rob.trials},
                       {"mean_error", res.mean_error()},
                       {"errors", res.errors},
                       {"construction_failures", res.failures},
                       {"seed", params.master_seed}};
                out << j.dump(2) << '\n';
            } else {
                out << "delnum=" << rob.delnum << '\n'
                    << "trials=" << rob.trials << '\n'
                    << "mean_error=" << res.mean_error() << '\n'
                    << "construction_failures=" << res.failures << '\n';
                for (std::size_t i = 0; i < res.errors.size(); ++i)
                    out << "trial_" << i << "_error=" << res.errors[i] << '\n';
            }
        } else if (*aud_cmd) {
            Graph g = load_graph(aud.graph);
            Partition truth = load_partition(aud.truth);
            truth.k = std::max(truth.k, aud.k);
            truth.validate_ground_truth();
            RegularView rv(g);
            MeasuredQuality q = measure_quality(g, truth);
            EmbeddingMatrix emb = exact_embeddings(rv, aud.k);
            CenterSet centers = cluster_centers(emb, truth);
            double ab = std::min(1.0, default_alpha_beta(aud.k, q.eps, q.phi));
            double alpha = aud.alpha.value_or(ab), beta = aud.beta.value_or(ab);
            GoodBadReport rep = classify_good_bad(emb, centers, truth, alpha, beta, q.eps, q.phi);
            LemmaAudit audit = check_lemma_bounds(emb, centers, truth, rep, q.eps, q.phi,
                                                  q.phi_is_cheeger_bound);
            if (as_json) {
                json checks = json::array();
                for (const auto& c : audit.checks)
                    checks.push_back({{"name", c.name},
                                      {"instances", c.instances},
                                      {"worst_slack", c.worst_slack},
                                      {"pass", c.pass}});
                json j{{"eps", q.eps},
                       {"phi", q.phi},
                       {"phi_is_cheeger_bound", q.phi_is_cheeger_bound},
                       {"alpha", alpha},
                       {"beta", beta},
                       {"bad_vertices", rep.bad_count},
                       {"spectrally_ambiguous", audit.spectrally_ambiguous},
                       {"checks", checks}};
                out << j.dump(2) << '\n';
            } else {
                out << "eps=" << q.eps << " phi=" << q.phi
                    << (q.phi_is_cheeger_bound ? " (cheeger lower bound, conservative)" : " (brute force)")
                    << '\n'
                    << "alpha=" << alpha << " beta=" << beta << " bad_vertices=" << rep.bad_count << '\n';
                for (const auto& c : audit.checks)
                    out << "lemma=" << c.name << " instances=" << c.instances
                        << " worst_slack=" << c.worst_slack << " pass=" << (c.pass ? 1 : 0) << '\n';
            }
            if (aud.perturb_delnum > 0) {
                PerturbationSpec spec;
                spec.mode = PerturbationSpec::Mode::PerClusterVertex;
                spec.del_num = aud.perturb_delnum;
                spec.seed = aud.perturb_seed;
                Graph perturbed = delete_edges(g, spec, &truth);
                RegularView rv_after(perturbed);
                PerturbAudit pa = check_perturbation_bounds(rv, rv_after, truth);
                for (const auto& c : pa.clusters) {
                    out << "perturb cluster=" << c.cluster << " deleted=" << c.deleted_edges
                        << " lambda2_before=" << c.lambda2_before << " lambda2_after=" << c.lambda2_after
                        << " weyl_bound=" << c.weyl_bound << " weyl_pass=" << (c.weyl_pass ? 1 : 0);
                    if (c.phi_in_after)
                        out << " phi_in=" << *c.phi_in_after << " cheeger_lower=" << c.cheeger_lower_after
                            << " cheeger_pass=" << (c.cheeger_pass ? 1 : 0);
                    out << '\n';
                }
                if (!pa.all_pass()) throw Error("perturbation audit failed");
            }
            if (!audit.all_pass()) throw Error("lemma audit failed");
        } else if (*bench_cmd) {
            detail::seed_into_overrides(bench.params);
            Graph g = load_graph(bench.graph);
            RegularView rv(g);
            AccessCounter counter(g);
            OracleParams params = bench.params.materialize(g.n());
            OracleState state = construct_oracle(rv, counter, params, bench.params.theta);
            out << "queries=0 fraction=" << edge_access_fraction(counter, g) << '\n';
            auto qeng = StreamKey::root(params.master_seed).child("bench-queries").engine();
            auto outlier_root = StreamKey::root(params.master_seed).child("outlier");
            std::uint32_t done = 0;
            std::uint32_t next_mark = 50;
            while (done < bench.queries) {
                Vertex x = static_cast<Vertex>(uniform_index(qeng, g.n()));
                which_cluster(rv, counter, state, x, outlier_root.child(x));
                ++done;
                if (done == next_mark || done == bench.queries) {
                    out << "queries=" << done << " fraction=" << edge_access_fraction(counter, g) << '\n';
                    next_mark *= 2;
                }
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

inline int dispatch(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return dispatch(std::move(args));
}

}  // namespace sco::cli
