#include "dpmix/harness.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dpmix::harness {

namespace fs = std::filesystem;

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw InvalidConfig("malformed json in " + path + ": " + e.what());
    }
    return j;
}

void write_json_file(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path);
    out << j.dump(2) << "\n";
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open " + path);
    Dataset data;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (vals.empty()) continue;
        Eigen::VectorXd pt(static_cast<int>(vals.size()));
        for (size_t i = 0; i < vals.size(); ++i) pt(static_cast<int>(i)) = vals[i];
        if (!data.points.empty() && pt.size() != data.points.front().size()) {
            throw InvalidConfig("inconsistent point dimension in " + path);
        }
        data.points.push_back(std::move(pt));
    }
    data.created_tick = provenance_tick();
    return data;
}

void write_dataset(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw IoFailure("cannot write " + path);
    char buf[40];
    for (const auto& pt : data.points) {
        for (int i = 0; i < pt.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%.17g", pt(i));
            out << (i ? " " : "") << buf;
        }
        out << "\n";
    }
}

namespace {

std::string join(const std::string& dir, const std::string& name) {
    if (dir.empty()) return name;
    return (fs::path(dir) / name).string();
}

MixtureMetric kappa_metric_1d() {
    return [](const Mixture& a, const Mixture& b) { return kappa_mix_1d(a, b).value; };
}

MixtureCover line_cover(int size, double alpha, double spacing) {
    MixtureCover cover;
    cover.alpha = alpha;
    cover.metric = MetricTag::kappa_mix;
    cover.recipe = json{{"kind", "fixture_line"},
                        {"version", 1},
                        {"n", size},
                        {"alpha", alpha},
                        {"spacing", spacing}};
    for (int i = 0; i < size; ++i) {
        Eigen::VectorXd mu(1);
        mu << spacing * static_cast<double>(i);
        Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(1, 1);
        cover.elements.push_back(Mixture::single(Gaussian(mu, cov)));
    }
    cover.claimed_t = 1.0;
    cover.claimed_gamma = 2.0 * alpha;
    cover.built_tick = provenance_tick();
    return cover;
}

}  // namespace

NeighborInstance dp_audit_instance(int t_rounds, int cover_size, uint64_t seed) {
    (void)seed;  // the instance is fixed; seed kept for interface symmetry
    NeighborInstance inst;
    inst.cover = line_cover(cover_size, 0.2, 3.0);
    const Mixture& a = inst.cover.elements[0];
    const Mixture& b = inst.cover.elements[1];
    for (int i = 0; i < t_rounds; ++i) {
        HypothesisList list;
        list.source_chunk = i;
        list.budget = 2;
        if (i + 1 < t_rounds) {
            list.items = {a, b};
        } else {
            list.items = {a};
        }
        inst.base.push_back(list);
    }
    inst.neighbor = inst.base;
    inst.neighbor.back().items = {b};
    return inst;
}

NeighborInstance sensitivity_instance(int t_rounds, int cover_size, int items_per_list,
                                      uint64_t seed) {
    NeighborInstance inst;
    inst.cover = line_cover(cover_size, 0.2, 2.0);
    RngStream rng(seed);
    auto random_list = [&](int chunk) {
        HypothesisList list;
        list.source_chunk = chunk;
        list.budget = items_per_list;
        for (int j = 0; j < items_per_list; ++j) {
            const long e = rng.uniform_int(cover_size);
            Eigen::VectorXd mu(1);
            mu << 2.0 * static_cast<double>(e) + rng.uniform(-0.6, 0.6);
            Eigen::MatrixXd cov(1, 1);
            cov << std::exp(rng.uniform(-0.3, 0.3));
            list.items.push_back(Mixture::single(Gaussian(mu, cov)));
        }
        return list;
    };
    for (int i = 0; i < t_rounds; ++i) inst.base.push_back(random_list(i));
    inst.neighbor = inst.base;
    const long replaced = rng.uniform_int(t_rounds);
    inst.neighbor[static_cast<size_t>(replaced)] = random_list(static_cast<int>(replaced));
    return inst;
}

PlantedInstance planted_instance(int t_rounds, int decoys_per_list, double alpha, uint64_t seed) {
    GaussianBox box;
    box.dim = 1;
    box.mean_bound = 4.0;
    box.eig_min = 0.5;
    box.eig_max = 2.0;
    GaussianCover comp = bounded_gaussian_cover(box, alpha);

    RngStream rng(seed);
    Eigen::VectorXd mu(1);
    mu << rng.uniform(-0.8 * box.mean_bound, 0.8 * box.mean_bound);
    Eigen::MatrixXd cov(1, 1);
    cov << rng.uniform(box.eig_min + 0.1, box.eig_max - 0.1);

    PlantedInstance inst{dense_mixture_cover(comp, 1, alpha),
                         {},
                         Mixture::single(Gaussian(mu, cov)),
                         alpha,
                         decoys_per_list + 1};
    for (int i = 0; i < t_rounds; ++i) {
        HypothesisList list;
        list.source_chunk = i;
        list.budget = decoys_per_list + 1;
        // One item within alpha of the planted hypothesis.
        for (;;) {
            Eigen::VectorXd m2 = mu;
            m2(0) += rng.uniform(-0.5, 0.5) * alpha * std::sqrt(cov(0, 0));
            Eigen::MatrixXd c2 = cov;
            c2(0, 0) *= std::exp(rng.uniform(-0.4, 0.4) * alpha);
            Mixture item = Mixture::single(Gaussian(m2, c2));
            if (kappa_mix_1d(item, inst.planted).value <= alpha) {
                list.items.push_back(std::move(item));
                break;
            }
        }
        for (int jd = 0; jd < decoys_per_list; ++jd) {
            Eigen::VectorXd md(1);
            md << rng.uniform(-box.mean_bound, box.mean_bound);
            Eigen::MatrixXd cd(1, 1);
            cd << rng.uniform(box.eig_min, box.eig_max);
            list.items.push_back(Mixture::single(Gaussian(md, cd)));
        }
        inst.lists.push_back(std::move(list));
    }
    return inst;
}

std::vector<int> full_scores(const std::vector<HypothesisList>& lists, const MixtureCover& cover,
                             double radius, const MixtureMetric& metric) {
    std::vector<int> scores(cover.elements.size(), 0);
    for (size_t e = 0; e < cover.elements.size(); ++e) {
        for (const auto& list : lists) {
            for (const auto& item : list.items) {
                if (metric(cover.elements[e], item) <= radius) {
                    ++scores[e];
                    break;
                }
            }
        }
    }
    return scores;
}

CommandResult cmd_gen(const json& config, const std::string& out_dir) {
    Mixture model = [&] {
        if (config.contains("model")) return mixture_from_json(config.at("model"));
        if (config.contains("model_path")) {
            return mixture_from_json(load_json_file(config.at("model_path").get<std::string>()));
        }
        throw InvalidConfig("gen config needs model or model_path");
    }();
    const long n = config.value("n", 0L);
    if (n < 0) throw InvalidConfig("n must be >= 0");
    const uint64_t seed = config.value("seed", uint64_t{1});

    RngStream rng(seed);
    Dataset data = sample(model, static_cast<size_t>(n), rng);

    const std::string model_path = join(out_dir, config.value("out_model", "model.json"));
    const std::string data_path = join(out_dir, config.value("out_data", "data.txt"));
    const std::string manifest_path = join(out_dir, config.value("out_manifest", "gen_manifest.json"));
    write_json_file(model_path, to_json(model));
    write_dataset(data_path, data);
    json manifest{{"seed", seed}, {"n", n}, {"model", model_path}, {"data", data_path}};
    write_json_file(manifest_path, manifest);
    return CommandResult{kExitOk, manifest};
}

namespace {

PipelineParams pipeline_from_config(const json& pc, double cover_t) {
    DecodeParams decode;
    if (pc.contains("decode")) {
        const json& dj = pc.at("decode");
        decode.m = dj.value("m", decode.m);
        decode.L_budget = dj.value("L_budget", decode.L_budget);
        decode.alpha = dj.value("alpha", decode.alpha);
        decode.beta = dj.value("beta", decode.beta);
        decode.gamma = dj.value("gamma", decode.gamma);
        decode.subset_size = dj.value("subset_size", decode.subset_size);
        decode.grid_bits = dj.value("grid_bits", decode.grid_bits);
    }
    std::map<std::string, double> constants;
    if (pc.contains("constants")) {
        for (auto& [name, v] : pc.at("constants").items()) constants[name] = v.get<double>();
    }
    PrivacyParams priv{pc.value("epsilon", 1.0), pc.value("delta", 1e-6)};
    PipelineParams params =
        derive_parameters(pc.value("alpha", 0.1), pc.value("beta", 0.1), priv,
                          pc.value("k", 1), pc.value("d", 1), cover_t, decode, constants);
    params.decode = decode;
    if (pc.contains("decode")) {
        const json& dj = pc.at("decode");
        params.decode_opts.component_budget =
            dj.value("component_budget", params.decode_opts.component_budget);
        params.decode_opts.thin_separation =
            dj.value("thin_separation", params.decode_opts.thin_separation);
    }
    if (pc.value("mode", std::string("practical")) == "practical") {
        params.mode = PipelineMode::practical;
        const json ov = pc.value("overrides", json::object());
        params.T_run = ov.value("T", 0L);
        params.m2_run = ov.value("m2", 0L);
        params.m3_run = ov.value("m3", 0L);
        params.survivor_cap = ov.value("survivor_cap", params.survivor_cap);
        params.mde_mc_n = ov.value("mde_mc_n", params.mde_mc_n);
        params.filter_mc_n = ov.value("filter_mc_n", params.filter_mc_n);
        params.filter_conf = ov.value("filter_conf", params.filter_conf);
        params.overrides = ov;
        if (params.T_run < 1 || params.m2_run < 1 || params.m3_run < 1) {
            throw InvalidConfig("practical mode needs overrides T, m2, m3");
        }
    }
    return params;
}

}  // namespace

CommandResult cmd_learn(const json& config, const std::string& out_dir) {
    if (!config.contains("pipeline")) throw InvalidConfig("learn config needs pipeline settings");
    const json& pc = config.at("pipeline");
    const int k = pc.value("k", 1);

    // The candidate space is constructed before any data is read.
    std::optional<DenseMixtureLattice> lattice;
    std::optional<MixtureCover> explicit_cover;
    double cover_t = pc.value("cover_t", 1e3);
    if (config.contains("cover") && config.at("cover").contains("box")) {
        const json& cj = config.at("cover");
        GaussianBox box;
        box.dim = cj.at("box").value("dim", 1);
        box.mean_bound = cj.at("box").at("mean_bound").get<double>();
        box.eig_min = cj.at("box").at("eig_min").get<double>();
        box.eig_max = cj.at("box").at("eig_max").get<double>();
        GaussianLattice component = gaussian_box_lattice(box, cj.at("alpha").get<double>());
        lattice = dense_mixture_lattice(component, k, cj.at("alpha").get<double>());
    } else if (config.contains("cover_path")) {
        json cj = load_json_file(config.at("cover_path").get<std::string>());
        MixtureCover cover = replay_mixture_cover(cj.at("recipe"));
        if (cover.claimed_t) cover_t = *cover.claimed_t;
        explicit_cover = std::move(cover);
    } else {
        throw InvalidConfig("learn config needs cover.box or cover_path");
    }

    PipelineParams params = pipeline_from_config(pc, cover_t);
    const uint64_t seed = config.value("seed", uint64_t{1});
    const std::string manifest_path =
        join(out_dir, config.value("out_manifest", "run_manifest.json"));

    if (params.mode == PipelineMode::theory) {
        json manifest{{"params", pipeline_params_to_json(params)},
                      {"executable", params.executable},
                      {"note", "theory-mode sizes are reported, not executed"}};
        write_json_file(manifest_path, manifest);
        return CommandResult{kExitOk, manifest};
    }

    if (!config.contains("data_path")) throw InvalidConfig("learn config needs data_path");
    Dataset data = load_dataset(config.at("data_path").get<std::string>());
    data.seed = seed;

    RngStream rng(seed);
    LearnResult result = lattice
                             ? learn_gmm_dp(data, params, *lattice, rng)
                             : learn_gmm_dp(data, params, *explicit_cover, kappa_metric_1d(), rng);

    write_json_file(manifest_path, result.manifest);
    if (!result.selected.is_bottom) {
        write_json_file(join(out_dir, config.value("out_model", "learned.json")),
                        to_json(*result.selected.hypothesis));
    }
    return CommandResult{kExitOk, result.manifest};
}

CommandResult cmd_eval(const json& config, const std::string& out_dir, bool frozen_clock) {
    const Mixture a = mixture_from_json(load_json_file(config.at("model_a").get<std::string>()));
    const Mixture b = mixture_from_json(load_json_file(config.at("model_b").get<std::string>()));
    if (a.dim() != b.dim()) throw DimensionMismatch("models of unequal dimension");

    const auto start = std::chrono::steady_clock::now();
    std::string method = config.value("method", std::string("auto"));
    double tv = 0.0, half_width = 0.0;
    if (method == "auto") method = a.dim() == 1 ? "quadrature" : "mc";
    if (method == "quadrature") {
        tv = tv_quadrature_1d(a, b, config.value("quadrature_tol", 1e-9));
    } else if (method == "mc") {
        RngStream rng(config.value("seed", uint64_t{1}));
        const TvEstimate est = tv_mc_estimate(a, b, config.value("mc_n", 200000L),
                                              config.value("conf", 0.99), rng);
        tv = est.value;
        half_width = est.half_width;
    } else {
        throw InvalidConfig("eval method must be auto, quadrature, or mc");
    }
    const double seconds =
        frozen_clock ? 0.0
                     : std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                           .count();

    const std::string csv_path = join(out_dir, config.value("out_csv", "eval.csv"));
    const bool existed = fs::exists(csv_path);
    std::ofstream out(csv_path, std::ios::app);
    if (!out) throw IoFailure("cannot write " + csv_path);
    if (!existed) out << "model_a,model_b,method,tv,ci_half_width,seconds\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.6g", tv, half_width, seconds);
    out << config.at("model_a").get<std::string>() << ","
        << config.at("model_b").get<std::string>() << "," << method << "," << buf << "\n";
    json summary{{"tv", tv}, {"ci_half_width", half_width}, {"method", method}};
    return CommandResult{kExitOk, summary};
}

CommandResult cmd_audit(const json& config, const std::string& out_dir) {
    const std::string kind = config.value("kind", std::string(""));
    const uint64_t seed = config.value("seed", uint64_t{1});

    if (kind == "dp") {
        const PrivacyParams priv{config.value("epsilon", 1.0), config.value("delta", 1e-6)};
        const long runs = config.value("runs", 10000L);
        const int rounds = config.value("rounds", 60);
        const int cover_size = config.value("cover_size", 1000);
        NeighborInstance inst = dp_audit_instance(rounds, cover_size, seed);
        const MixtureMetric metric = kappa_metric_1d();
        const ScoreTable t1 =
            score_table(inst.base, inst.cover, 2.0 * inst.cover.alpha, metric, MetricTag::kappa_mix);
        const ScoreTable t2 = score_table(inst.neighbor, inst.cover, 2.0 * inst.cover.alpha, metric,
                                          MetricTag::kappa_mix);
        const double beta = config.value("beta", 0.05);
        auto mech = [&](const ScoreTable& t) {
            return [&t, priv, beta](RngStream& r) {
                return gap_max(t, priv, 0.1, beta, r).key;
            };
        };
        RngStream rng(seed);
        DpAuditReport report =
            empirical_dp_audit(mech(t1), mech(t2), runs, priv, config.value("bootstrap_conf", 0.99),
                               config.value("bootstrap_samples", 500L), rng);
        json out = dp_audit_to_json(report);
        write_json_file(join(out_dir, config.value("out_report", "dp_audit.json")), out);
        const double slack = config.value("epsilon_slack", 0.5);
        const bool pass = report.epsilon_hat_upper <= priv.epsilon + slack;
        out["pass"] = pass;
        return CommandResult{pass ? kExitOk : kExitAuditFailure, out};
    }

    if (kind == "sensitivity") {
        const int pairs = config.value("pairs", 50);
        const int rounds = config.value("rounds", 12);
        const int cover_size = config.value("cover_size", 40);
        const int items = config.value("items_per_list", 4);
        const MixtureMetric metric = kappa_metric_1d();
        int worst = 0;
        for (int p = 0; p < pairs; ++p) {
            NeighborInstance inst =
                sensitivity_instance(rounds, cover_size, items, derive_seed(seed, p));
            const double radius = 2.0 * inst.cover.alpha;
            const auto s1 = full_scores(inst.base, inst.cover, radius, metric);
            const auto s2 = full_scores(inst.neighbor, inst.cover, radius, metric);
            for (size_t e = 0; e < s1.size(); ++e) {
                worst = std::max(worst, std::abs(s1[e] - s2[e]));
            }
        }
        json out{{"pairs", pairs}, {"max_score_difference", worst}};
        write_json_file(join(out_dir, config.value("out_report", "sensitivity_audit.json")), out);
        const bool pass = worst <= 1;
        out["pass"] = pass;
        return CommandResult{pass ? kExitOk : kExitAuditFailure, out};
    }

    if (kind == "cover") {
        const long probes = config.value("probes", 1000L);
        const double gamma = config.value("gamma", 0.2);
        RngStream rng(seed);
        json out;
        CoverAudit audit;
        if (config.contains("simplex")) {
            const json& sj = config.at("simplex");
            SimplexCover cover = simplex_cover(sj.at("k").get<int>(), sj.at("alpha").get<double>());
            std::vector<Eigen::VectorXd> pts;
            for (long i = 0; i < probes; ++i) {
                Eigen::VectorXd w(cover.elements.front().size());
                double sum = 0.0;
                for (int a = 0; a < w.size(); ++a) {
                    w(a) = -std::log(rng.uniform_open());
                    sum += w(a);
                }
                pts.push_back(w / sum);
            }
            audit = audit_local_smallness(cover, gamma, pts,
                                          [](const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
                                              return (x - y).lpNorm<Eigen::Infinity>();
                                          });
        } else if (config.contains("box")) {
            GaussianBox box;
            const json& bj = config.at("box");
            box.dim = bj.value("dim", 1);
            box.mean_bound = bj.at("mean_bound").get<double>();
            box.eig_min = bj.at("eig_min").get<double>();
            box.eig_max = bj.at("eig_max").get<double>();
            GaussianCover cover = bounded_gaussian_cover(box, config.at("alpha").get<double>());
            const auto pts = sample_box_gaussians(box, static_cast<size_t>(probes), rng);
            audit = audit_local_smallness(cover, gamma, pts, [](const Gaussian& x, const Gaussian& y) {
                return tv_gaussian_1d_exact(x, y);
            });
        } else {
            throw InvalidConfig("cover audit needs simplex or box settings");
        }
        json violations = json::array();
        for (const auto& [p, c] : audit.violations) {
            violations.push_back(json{{"probe", p}, {"count", c}});
        }
        out = json{{"max_ball_count", audit.max_ball_count},
                   {"probes", audit.probes},
                   {"violations", violations}};
        write_json_file(join(out_dir, config.value("out_report", "cover_audit.json")), out);
        const bool pass = audit.violations.empty();
        out["pass"] = pass;
        return CommandResult{pass ? kExitOk : kExitAuditFailure, out};
    }

    throw InvalidConfig("audit kind must be dp, sensitivity, or cover");
}

int run_command(const std::string& name, json config, const std::string& out_dir,
                std::optional<uint64_t> seed_override, bool frozen_clock) {
    try {
        if (seed_override) config["seed"] = *seed_override;
        if (!out_dir.empty()) fs::create_directories(out_dir);
        CommandResult result;
        if (name == "gen") {
            result = cmd_gen(config, out_dir);
        } else if (name == "learn") {
            result = cmd_learn(config, out_dir);
        } else if (name == "eval") {
            result = cmd_eval(config, out_dir, frozen_clock);
        } else if (name == "audit") {
            result = cmd_audit(config, out_dir);
        } else {
            throw InvalidConfig("unknown command: " + name);
        }
        std::cout << result.summary.dump(2) << "\n";
        return result.exit_code;
    } catch (const InsufficientData& e) {
        std::cerr << "insufficient data: " << e.what() << "\n";
        return kExitInsufficientData;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInvalidConfig;
    } catch (const std::exception& e) {
        std::cerr << "unexpected error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace dpmix::harness
