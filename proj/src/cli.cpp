#include "rtb/cli.hpp"

#include <CLI11.hpp>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "rtb/dasa.hpp"
#include "rtb/ftrl.hpp"

namespace rtb {

namespace {

namespace fs = std::filesystem;

// --- manifest-driven config assembly ---

io::LogSchema schema_from_manifest(const io::Manifest& m) {
    const auto dim = static_cast<std::uint32_t>(m.get_int("data.feature_dimension", 1 << 18));
    const int b_max = static_cast<int>(m.get_int("episode.b_max", 300));
    const std::string decl = m.get_string("data.schema", "id,click,price,feats");
    return io::LogSchema::parse(decl, dim, b_max);
}

om::OpponentTrainConfig opponent_cfg_from_manifest(const io::Manifest& m) {
    om::OpponentTrainConfig cfg;
    cfg.alpha = m.get_double("opponent.alpha", 0.25);
    cfg.embedding_dim = static_cast<std::size_t>(m.get_int("opponent.embedding_dim", 32));
    cfg.model_width = static_cast<std::size_t>(m.get_int("opponent.model_width", 32));
    cfg.ffn_width = static_cast<std::size_t>(m.get_int("opponent.ffn_width", 64));
    cfg.epochs = static_cast<std::size_t>(m.get_int("opponent.epochs", 5));
    cfg.batch_size = static_cast<std::size_t>(m.get_int("opponent.batch_size", 32));
    cfg.embedding_vocab = static_cast<std::uint32_t>(m.get_int("opponent.vocab", 4096));
    cfg.optimizer.learning_rate = m.get_double("opponent.lr", 1e-3);
    cfg.optimizer.decay_factor = m.get_double("opponent.lr_decay", 0.97);
    return cfg;
}

io::SyntheticMarketSpec synth_spec_from_manifest(const io::Manifest& m) {
    io::SyntheticMarketSpec spec;
    spec.num_requests = static_cast<std::size_t>(m.get_int("synth.num_requests", 10000));
    spec.b_max = static_cast<int>(m.get_int("episode.b_max", 300));
    spec.seed = static_cast<std::uint64_t>(m.get_int("seed", 1));
    for (std::size_t v : m.get_size_list("synth.noise_fields", {}))
        spec.noise_field_cardinalities.push_back(static_cast<std::uint32_t>(v));
    const std::size_t segments = m.indexed_sections("synth.segment");
    for (std::size_t s = 0; s < segments; ++s) {
        const std::string prefix = "synth.segment." + std::to_string(s) + ".";
        io::SegmentSpec seg;
        seg.weight = m.get_double(prefix + "weight", 0.0);
        seg.ctr = m.get_double(prefix + "ctr", 0.0);
        std::istringstream ps(m.require_string(prefix + "price"));
        std::string pair;
        while (std::getline(ps, pair, ',')) {
            const auto colon = pair.find(':');
            if (colon == std::string::npos)
                throw ConfigError("synth segment price must be bucket:prob pairs");
            seg.price_pdf[std::stoi(pair.substr(0, colon))] = std::stod(pair.substr(colon + 1));
        }
        spec.segments.push_back(std::move(seg));
    }
    return spec;
}

}  // namespace

sim::ScenarioConfig scenario_from_manifest(const io::Manifest& m, double cpm_train) {
    sim::ScenarioConfig sc;
    sc.episode.auctions_per_epoch =
        static_cast<std::size_t>(m.get_int("episode.auctions_per_epoch", 1000));
    sc.episode.budget_ratio = m.get_double("episode.budget_ratio", 0.25);
    sc.episode.cpm_train = cpm_train;
    sc.episode.num_epochs = static_cast<std::size_t>(m.get_int("episode.num_epochs", 1));
    sc.episode.seed = static_cast<std::uint64_t>(m.get_int("seed", 1));
    sc.episode.price_space.b_max = static_cast<int>(m.get_int("episode.b_max", 300));

    const std::size_t n = m.indexed_sections("agent");
    if (n < 2) throw ConfigError("manifest: need at least two [agent.<i>] sections");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string p = "agent." + std::to_string(i) + ".";
        sim::AgentSpec spec;
        const std::string kind = m.get_string(p + "kind", "linear");
        if (kind == "linear") {
            spec.kind = sim::AgentSpec::Kind::Linear;
            spec.linear.base_bid = m.get_double(p + "base_bid", 0.0);
            spec.linear.reference_ctr = m.get_double(p + "reference_ctr", 0.0);
            spec.linear.pctr_noise_sigma = m.get_double(p + "pctr_noise_sigma", 0.0);
        } else if (kind == "ddpg") {
            spec.kind = sim::AgentSpec::Kind::Ddpg;
            agents::DdpgConfig& cfg = spec.ddpg;
            cfg.gamma = m.get_double(p + "gamma", 1.0);
            cfg.tau = m.get_double(p + "tau", 0.01);
            cfg.noise_sigma = m.get_double(p + "noise_sigma", 0.1);
            cfg.noise_decay = m.get_double(p + "noise_decay", 0.999);
            cfg.minibatch = static_cast<std::size_t>(m.get_int(p + "minibatch", 32));
            cfg.update_period = static_cast<std::size_t>(m.get_int(p + "update_period", 1000));
            cfg.updates_per_event =
                static_cast<std::size_t>(m.get_int(p + "updates_per_event", 50));
            cfg.replay_capacity =
                static_cast<std::size_t>(m.get_int(p + "replay_capacity", 1000));
            cfg.price_space = sc.episode.price_space;
            cfg.use_opponent_model = m.get_bool(p + "use_opponent_model", false);
            cfg.relaxed_indicator = m.get_bool(p + "relaxed_indicator", false);
            cfg.indicator_temperature = m.get_double(p + "indicator_temperature", 0.05);
            cfg.hidden = m.get_size_list(p + "hidden", {64, 64});
            cfg.actor_opt.learning_rate = m.get_double(p + "actor_lr", 1e-3);
            cfg.critic_opt.learning_rate = m.get_double(p + "critic_lr", 1e-3);
            cfg.actor_opt.decay_factor = m.get_double(p + "lr_decay", 0.999);
            cfg.critic_opt.decay_factor = m.get_double(p + "lr_decay", 0.999);
            cfg.pctr_scale = m.get_double(p + "pctr_scale", 0.0);
            spec.opponent_model = m.get_string(p + "model", "");
        } else {
            throw ConfigError("manifest: unknown agent kind '" + kind + "'");
        }
        sc.roster.push_back(std::move(spec));
    }
    return sc;
}

std::vector<std::shared_ptr<const agents::OpponentModel>> opponent_models_from_manifest(
    const io::Manifest& m, int b_max) {
    std::vector<std::shared_ptr<const agents::OpponentModel>> models;
    const std::size_t n = m.indexed_sections("agent");
    for (std::size_t i = 0; i < n; ++i) {
        const std::string p = "agent." + std::to_string(i) + ".";
        const std::string source = m.get_string(p + "model", "");
        if (source.empty()) {
            models.push_back(nullptr);
        } else if (source == "uniform") {
            models.push_back(std::make_shared<agents::UniformOpponentModel>(b_max));
        } else {
            models.push_back(
                std::make_shared<agents::DasaOpponentModel>(om::DasaModel::load(source)));
        }
    }
    return models;
}

namespace {

struct CommonOpts {
    std::string manifest_path;
    std::string out_dir;
    std::string seed;
    std::vector<std::string> sets;
};

void add_common(CLI::App* sub, CommonOpts& o) {
    sub->add_option("--manifest", o.manifest_path, "run manifest file");
    sub->add_option("--out", o.out_dir, "run directory (overrides manifest run_dir)");
    sub->add_option("--seed", o.seed, "override the manifest seed");
    sub->add_option("--set", o.sets, "override a manifest key, form key=value")
        ->take_all();
}

io::Manifest resolve_manifest(const CommonOpts& o) {
    io::Manifest m;
    if (!o.manifest_path.empty()) m = io::Manifest::load(o.manifest_path);
    for (const auto& kv : o.sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        m.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!o.seed.empty()) m.set("seed", o.seed);
    return m;
}

std::string resolve_run_dir(const io::Manifest& m, const CommonOpts& o) {
    std::string dir;
    if (!o.out_dir.empty()) {
        dir = o.out_dir;
    } else {
        const char* root = std::getenv("RTBSIM_RUN_ROOT");
        const std::string rel = m.get_string("run_dir", "run");
        dir = root && *root ? std::string(root) + "/" + rel : rel;
    }
    fs::create_directories(dir);
    return dir;
}

std::string default_path(const io::Manifest& m, const std::string& key, const std::string& dir,
                         const std::string& name) {
    return m.get_string(key, dir + "/" + name);
}

env::AuctionEnv::PctrFn make_cached_pctr(const ctr::FtrlModel& model,
                                         const std::vector<io::BidRequest>& train,
                                         const std::vector<io::BidRequest>& test) {
    auto train_cache = std::make_shared<std::vector<double>>();
    auto test_cache = std::make_shared<std::vector<double>>();
    train_cache->reserve(train.size());
    for (const auto& r : train) train_cache->push_back(model.predict(r.features));
    test_cache->reserve(test.size());
    for (const auto& r : test) test_cache->push_back(model.predict(r.features));
    const io::BidRequest* train_base = train.data();
    const io::BidRequest* test_base = test.data();
    const std::size_t train_n = train.size(), test_n = test.size();
    const ctr::FtrlModel* raw = &model;
    return [=](const io::BidRequest& req) {
        const io::BidRequest* p = &req;
        if (p >= train_base && p < train_base + train_n)
            return (*train_cache)[static_cast<std::size_t>(p - train_base)];
        if (test_n > 0 && p >= test_base && p < test_base + test_n)
            return (*test_cache)[static_cast<std::size_t>(p - test_base)];
        return raw->predict(req.features);
    };
}

int cmd_synth_gen(const io::Manifest& m, const std::string& dir) {
    const io::SyntheticMarketSpec spec = synth_spec_from_manifest(m);
    io::SyntheticGroundTruth truth;
    const auto requests = io::generate_synthetic(spec, &truth);
    const std::string req_path = default_path(m, "data.requests", dir, "requests.tsv");
    const std::string truth_path = default_path(m, "data.truth", dir, "truth.json");
    io::write_bid_log(req_path, requests);
    truth.save(truth_path);
    std::printf("synth-gen: wrote %zu requests to %s (truth: %s, entropy %.4f nats)\n",
                requests.size(), req_path.c_str(), truth_path.c_str(), truth.price_entropy());
    return 0;
}

int cmd_train_ctr(const io::Manifest& m, const std::string& dir) {
    const io::LogSchema schema = schema_from_manifest(m);
    const std::string input = default_path(m, "data.requests", dir, "requests.tsv");
    io::ParseStats stats;
    const auto requests = io::parse_bid_log(input, schema, &stats);

    ctr::FtrlConfig cfg;
    cfg.alpha = m.get_double("ctr.alpha", 0.05);
    cfg.beta = m.get_double("ctr.beta", 1.0);
    cfg.l1 = m.get_double("ctr.l1", 1.0);
    cfg.l2 = m.get_double("ctr.l2", 1.0);
    cfg.dimension = schema.feature_dimension;
    ctr::FtrlModel model(cfg);

    const auto passes = static_cast<std::size_t>(m.get_int("ctr.passes", 1));
    double logloss = 0.0;
    std::size_t labeled = 0;
    for (std::size_t pass = 0; pass < passes; ++pass) {
        logloss = 0.0;
        labeled = 0;
        for (const auto& req : requests) {
            if (!req.click_label) continue;
            const double p = model.predict(req.features);
            logloss -= *req.click_label == 1 ? std::log(p) : std::log(1.0 - p);
            model.update(req.features, *req.click_label);
            ++labeled;
        }
    }
    const std::string out = default_path(m, "ctr.checkpoint", dir, "ctr.ckpt");
    model.save(out);
    std::printf("train-ctr: %zu labeled requests (%zu malformed lines skipped), "
                "progressive logloss %.5f, checkpoint %s\n",
                labeled, stats.malformed, labeled ? logloss / labeled : 0.0, out.c_str());
    return 0;
}

struct LoadedData {
    std::vector<io::BidRequest> train;
    std::vector<io::BidRequest> test;
    double cpm = 0.0;
};

LoadedData load_split_requests(const io::Manifest& m, const std::string& dir) {
    const io::LogSchema schema = schema_from_manifest(m);
    const std::string input = default_path(m, "data.requests", dir, "requests.tsv");
    const auto requests = io::parse_bid_log(input, schema);
    if (requests.empty()) throw InputError("no requests parsed from " + input);
    LoadedData data;
    const double frac = m.get_double("data.train_fraction", 0.8);
    std::tie(data.train, data.test) = sim::split_requests(requests, frac);
    data.cpm = m.has("episode.cpm_train") ? m.get_double("episode.cpm_train", 0.0)
                                          : io::compute_cpm_train(data.train);
    return data;
}

int run_phase(const io::Manifest& m, const std::string& dir, bool replay_phase) {
    LoadedData data = load_split_requests(m, dir);
    sim::ScenarioConfig scenario = scenario_from_manifest(m, data.cpm);

    std::vector<std::shared_ptr<const agents::OpponentModel>> models(scenario.roster.size());
    if (replay_phase) {
        models = opponent_models_from_manifest(m, scenario.episode.price_space.b_max);
    } else {
        for (const auto& spec : scenario.roster)
            if (spec.kind == sim::AgentSpec::Kind::Ddpg && spec.ddpg.use_opponent_model)
                throw ConfigError(
                    "simulate runs the no-opponent-model phase; use `replay` for ddpg-om agents");
    }

    const std::string ctr_path = default_path(m, "ctr.checkpoint", dir, "ctr.ckpt");
    const ctr::FtrlModel ctr_model = ctr::FtrlModel::load(ctr_path);
    const auto pctr = make_cached_pctr(ctr_model, data.train, data.test);

    sim::RunOptions opts;
    opts.test_epochs = static_cast<std::size_t>(
        m.get_int("episode.test_epochs", replay_phase ? 20 : 0));
    opts.convergence_epsilon = m.get_double("harness.convergence_epsilon", 0.05);
    opts.convergence_window =
        static_cast<std::size_t>(m.get_int("harness.convergence_window", 20));

    const sim::RunResult result =
        sim::run_scenario(scenario, data.train, data.test, pctr, models, opts);

    sim::write_sim_log(dir + "/bidlog.tsv", result.bidlog,
                       data.train.front().features.dimension,
                       scenario.episode.price_space.b_max);
    sim::write_metrics_csv(dir + "/metrics.csv", result.train_metrics);
    sim::write_price_hist_csv(dir + "/price_hist.csv", result.train_metrics);
    sim::write_convergence(dir + "/convergence.txt", result.convergence);
    if (!result.test_metrics.empty())
        sim::write_metrics_csv(dir + "/test_metrics.csv", result.test_metrics);

    if (replay_phase) {
        std::vector<const agents::OpponentModel*> raw;
        for (const auto& mp : models)
            if (mp) raw.push_back(mp.get());
        if (!raw.empty()) {
            const std::size_t W = opts.convergence_window;
            const std::size_t total = result.train_metrics.size();
            if (total >= 2 * W) {
                std::vector<io::BidRequest> sample(
                    data.train.begin(),
                    data.train.begin() +
                        static_cast<std::ptrdiff_t>(std::min<std::size_t>(500, data.train.size())));
                const auto early = sim::mfe_check(raw, sample, result.train_metrics, 0, W,
                                                  scenario.episode.price_space.b_max);
                const auto late = sim::mfe_check(raw, sample, result.train_metrics, total - W,
                                                 total, scenario.episode.price_space.b_max);
                sim::write_mfe(dir + "/mfe.txt", early, late);
            }
        }
    }

    const char* phase = replay_phase ? "replay" : "simulate";
    if (result.convergence.convergence_epoch)
        std::printf("%s: %zu epochs, converged at epoch %zu, outputs in %s\n", phase,
                    result.train_metrics.size(), *result.convergence.convergence_epoch,
                    dir.c_str());
    else
        std::printf("%s: %zu epochs, not converged, outputs in %s\n", phase,
                    result.train_metrics.size(), dir.c_str());
    return 0;
}

int cmd_train_opponent(const io::Manifest& m, const std::string& dir, int agent,
                       const std::string& log_flag, const std::string& out_flag,
                       const std::string& survival_flag) {
    const std::string log_path = log_flag.empty() ? dir + "/bidlog.tsv" : log_flag;
    const auto log = sim::read_sim_log(log_path);
    if (log.empty()) throw InputError("empty simulation log: " + log_path);

    om::PriceSpace space{static_cast<int>(m.get_int("episode.b_max", 300))};
    auto samples = sim::extract_survival_dataset(log, agent, space);
    if (!survival_flag.empty())
        io::write_survival_dataset(survival_flag, samples, log.front().features.dimension,
                                   space.b_max);

    const auto max_samples =
        static_cast<std::size_t>(m.get_int("opponent.max_samples", 30000));
    if (samples.size() > max_samples)  // keep the tail: late epochs are closest to steady state
        samples.erase(samples.begin(),
                      samples.begin() + static_cast<std::ptrdiff_t>(samples.size() - max_samples));

    std::size_t uncensored = 0;
    for (const auto& s : samples)
        if (!s.censored) ++uncensored;

    const om::OpponentTrainConfig cfg = opponent_cfg_from_manifest(m);
    const auto master = static_cast<std::uint64_t>(m.get_int("seed", 1));
    om::DasaModel model(space, cfg,
                        substream_seed(master, "opponent." + std::to_string(agent)));
    std::vector<double> losses;
    model.train(samples, substream_seed(master, "opponent.shuffle." + std::to_string(agent)),
                &losses);

    const std::string out = out_flag.empty()
                                ? dir + "/opponent_" + std::to_string(agent) + ".dasa"
                                : out_flag;
    model.save(out);
    std::printf("train-opponent: agent %d, %zu samples (%zu uncensored), final loss %.5f, "
                "model %s\n",
                agent, samples.size(), uncensored, losses.empty() ? 0.0 : losses.back(),
                out.c_str());
    return 0;
}

int cmd_eval_anlp(const std::string& data_path, const std::string& model_path, bool uniform,
                  bool km) {
    std::uint32_t dim = 0;
    int b_max = 0;
    const auto samples = io::read_survival_dataset(data_path, &dim, &b_max);
    std::vector<om::SurvivalSample> eval;
    for (const auto& s : samples)
        if (!s.censored) eval.push_back(s);
    if (eval.empty()) throw InputError("eval-anlp: no uncensored samples in " + data_path);

    double value = 0.0;
    if (uniform) {
        std::vector<double> hazards(static_cast<std::size_t>(b_max));
        for (int j = 1; j <= b_max; ++j)
            hazards[static_cast<std::size_t>(j - 1)] = 1.0 / static_cast<double>(b_max - j + 1);
        const auto dist = om::MarketDistribution::from_hazards(hazards);
        value = om::anlp([&](const SparseFeatures&) { return dist; }, eval);
    } else if (km) {
        const auto dist = om::kaplan_meier(samples, om::PriceSpace{b_max});
        value = om::anlp([&](const SparseFeatures&) { return dist; }, eval);
    } else {
        if (model_path.empty())
            throw ConfigError("eval-anlp: pass --model, --uniform or --km");
        const om::DasaModel model = om::DasaModel::load(model_path);
        value = om::anlp([&](const SparseFeatures& f) { return model.infer(f); }, eval);
    }
    std::printf("anlp %.4f\n", value);
    return 0;
}

int cmd_mfe_check(const io::Manifest& m, const std::string& dir) {
    const int b_max = static_cast<int>(m.get_int("episode.b_max", 300));
    const auto models = opponent_models_from_manifest(m, b_max);
    std::vector<const agents::OpponentModel*> raw;
    for (const auto& mp : models)
        if (mp) raw.push_back(mp.get());
    if (raw.empty()) throw ConfigError("mfe-check: no agent has an opponent model configured");

    LoadedData data = load_split_requests(m, dir);
    std::vector<io::BidRequest> sample(
        data.train.begin(),
        data.train.begin() +
            static_cast<std::ptrdiff_t>(std::min<std::size_t>(500, data.train.size())));

    const auto series = sim::read_price_hist_csv(dir + "/price_hist.csv", b_max);
    const auto W =
        static_cast<std::size_t>(m.get_int("harness.convergence_window", 20));
    if (series.size() < 2 * W)
        throw InputError("mfe-check: need at least " + std::to_string(2 * W) + " epochs");
    const auto early = sim::mfe_check(raw, sample, series, 0, W, b_max);
    const auto late = sim::mfe_check(raw, sample, series, series.size() - W, series.size(), b_max);
    sim::write_mfe(dir + "/mfe.txt", early, late);
    std::printf("mfe-check: tv[0,%zu)=%.6f tv[%zu,%zu)=%.6f improved=%d\n", W, early.distance,
                series.size() - W, series.size(), late.distance,
                late.distance < early.distance ? 1 : 0);
    return 0;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"rtbsim: repeated second-price auction simulator with learned market models"};
    app.require_subcommand(1);

    CommonOpts common;
    int agent = 0;
    std::string log_flag, model_out_flag, survival_flag;
    std::string data_path, model_path;
    bool uniform = false, km = false;

    auto* synth = app.add_subcommand("synth-gen", "generate a synthetic request log + ground truth");
    add_common(synth, common);
    auto* train_ctr = app.add_subcommand("train-ctr", "train the FTRL click-through-rate model");
    add_common(train_ctr, common);
    auto* simulate = app.add_subcommand("simulate", "phase 1: run the market without opponent models");
    add_common(simulate, common);
    auto* train_op = app.add_subcommand("train-opponent", "phase 2: fit a market model from the bid log");
    add_common(train_op, common);
    train_op->add_option("--agent", agent, "agent index whose censored view is used")->required();
    train_op->add_option("--log", log_flag, "simulation bid log (default <run>/bidlog.tsv)");
    train_op->add_option("--model-out", model_out_flag, "output checkpoint path");
    train_op->add_option("--survival-out", survival_flag, "also dump the survival dataset");
    auto* replay = app.add_subcommand("replay", "phase 3: rerun the market with opponent models attached");
    add_common(replay, common);
    auto* eval_anlp = app.add_subcommand("eval-anlp", "average negative log probability on a survival dataset");
    eval_anlp->add_option("--data", data_path, "survival dataset file")->required();
    eval_anlp->add_option("--model", model_path, "dasa checkpoint");
    eval_anlp->add_flag("--uniform", uniform, "evaluate the uniform baseline");
    eval_anlp->add_flag("--km", km, "evaluate the Kaplan-Meier baseline");
    auto* mfe = app.add_subcommand("mfe-check", "market-model vs realized-price consistency check");
    add_common(mfe, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        std::cout << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (eval_anlp->parsed()) return cmd_eval_anlp(data_path, model_path, uniform, km);
        const io::Manifest m = resolve_manifest(common);
        const std::string dir = resolve_run_dir(m, common);
        if (synth->parsed()) return cmd_synth_gen(m, dir);
        if (train_ctr->parsed()) return cmd_train_ctr(m, dir);
        if (simulate->parsed()) return run_phase(m, dir, false);
        if (replay->parsed()) return run_phase(m, dir, true);
        if (train_op->parsed())
            return cmd_train_opponent(m, dir, agent, log_flag, model_out_flag, survival_flag);
        if (mfe->parsed()) return cmd_mfe_check(m, dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

int cli_main(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("rtbsim");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace rtb
