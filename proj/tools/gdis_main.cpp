#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "gdis/common.hpp"
#include "gdis/exposure.hpp"
#include "gdis/graph.hpp"
#include "gdis/model.hpp"
#include "gdis/scm.hpp"
#include "gdis/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw gdis::ValidationError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw gdis::ValidationError("cannot write file: " + path);
    out << content;
}

struct RunConfig {
    gdis::SimConfig sim;
    std::array<double, 3> fractions{0.6, 0.2, 0.2};
    gdis::Hyperparams hyper;
    gdis::ExposureContrast contrast;
    json raw;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    std::string text = read_file(path);
    rc.raw = json::parse(text);
    rc.sim = gdis::SimConfig::from_json(text);
    if (rc.raw.contains("partition")) {
        auto fr = rc.raw.at("partition").at("fractions").get<std::vector<double>>();
        if (fr.size() != 3)
            throw gdis::ValidationError("config: partition.fractions needs 3 entries");
        rc.fractions = {fr[0], fr[1], fr[2]};
    }
    rc.hyper.seed = rc.sim.seed;
    if (rc.raw.contains("train")) {
        const auto& t = rc.raw.at("train");
        if (t.contains("lr")) rc.hyper.lr = t.at("lr").get<double>();
        if (t.contains("epochs")) rc.hyper.epochs = t.at("epochs").get<int>();
        if (t.contains("patience")) rc.hyper.patience = t.at("patience").get<int>();
        if (t.contains("lambda_hsic")) rc.hyper.lambda_hsic = t.at("lambda_hsic").get<double>();
        if (t.contains("hidden")) rc.hyper.hidden = t.at("hidden").get<int>();
        if (t.contains("leaky_slope")) rc.hyper.leaky_slope = t.at("leaky_slope").get<double>();
    }
    if (rc.raw.contains("contrast")) {
        const auto& c = rc.raw.at("contrast");
        std::string mode = c.contains("mode") ? c.at("mode").get<std::string>()
                                              : std::string("all_treated_vs_none");
        if (mode == "all_treated_vs_none") {
            rc.contrast.all_treated_vs_none = true;
        } else if (mode == "levels") {
            rc.contrast.all_treated_vs_none = false;
            rc.contrast.level_base = c.at("level_base").get<double>();
            rc.contrast.level_alt = c.at("level_alt").get<double>();
        } else {
            throw gdis::ValidationError("config: unknown contrast mode '" + mode + "'");
        }
    }
    return rc;
}

std::string resolved_config_hash(const gdis::SimConfig& resolved) {
    return gdis::to_hex(gdis::fnv1a64(resolved.to_json()));
}

void write_manifest(const std::string& out_dir, const gdis::SimConfig& resolved,
                    const std::vector<std::string>& artifacts) {
    json manifest;
    manifest["resolved_config"] = json::parse(resolved.to_json());
    manifest["config_hash"] = resolved_config_hash(resolved);
    manifest["seed"] = resolved.seed;
    manifest["generator_note"] =
        "fully synthetic stand-in generator: structure, treatments and outcomes are simulated";
    manifest["artifacts"] = artifacts;
    manifest["created_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(
            std::chrono::system_clock::now().time_since_epoch())
            .count();
    write_file(out_dir + "/manifest.json", manifest.dump(2));
}

gdis::SimConfig manifest_config(const std::string& out_dir) {
    json manifest = json::parse(read_file(out_dir + "/manifest.json"));
    return gdis::SimConfig::from_json(manifest.at("resolved_config").dump());
}

std::vector<double> read_column(const std::string& path) {
    std::vector<double> values;
    std::ifstream in(path);
    if (!in) throw gdis::ValidationError("cannot open file: " + path);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        values.push_back(std::stod(line));
    }
    return values;
}

void write_column(const std::string& path, const std::vector<double>& values) {
    std::ostringstream ss;
    ss.precision(17);
    for (double v : values) ss << v << '\n';
    write_file(path, ss.str());
}

gdis::Network load_dataset(const std::string& out_dir, bool with_outcomes = true) {
    return gdis::load_network(out_dir + "/edges.txt", out_dir + "/features.csv",
                              out_dir + "/treatments.csv",
                              with_outcomes ? out_dir + "/outcomes.csv" : "");
}

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
    RunConfig rc = load_run_config(config_path);
    gdis::SimConfig resolved = gdis::resolve_config(rc.sim);
    fs::create_directories(out_dir);

    gdis::Network net = gdis::generate_network(resolved);
    auto sim = gdis::simulate_outcomes(net, resolved);
    auto gt = gdis::ground_truth_effects(net, resolved, rc.contrast, sim.noise);

    gdis::save_network(net, out_dir + "/edges.txt", out_dir + "/features.csv",
                       out_dir + "/treatments.csv", out_dir + "/outcomes.csv");
    write_column(out_dir + "/noise.csv", sim.noise);
    write_column(out_dir + "/wy.csv", sim.contagion);
    write_file(out_dir + "/ground_truth.json", gt.to_json());
    write_manifest(out_dir, resolved,
                   {"edges.txt", "features.csv", "treatments.csv", "outcomes.csv",
                    "noise.csv", "wy.csv", "ground_truth.json"});
    gdis::log_info("generated " + std::to_string(net.node_count()) + " nodes, " +
                   std::to_string(net.edge_count()) + " edges -> " + out_dir);
    return 0;
}

int cmd_expose(const std::string& out_dir) {
    auto cfg = manifest_config(out_dir);
    auto net = load_dataset(out_dir);
    auto exposures = gdis::compute_exposures(net, cfg.smoothing_eps);
    write_file(out_dir + "/exposures.json", exposures.to_json());
    gdis::log_info("exposures written to " + out_dir + "/exposures.json");
    return 0;
}

int cmd_oracle_check(int trials, std::uint64_t seed, const std::string& scm_path);

int cmd_train(const std::string& config_path, const std::string& out_dir) {
    RunConfig rc = load_run_config(config_path);
    gdis::SimConfig resolved = gdis::resolve_config(rc.sim);
    auto net = load_dataset(out_dir);
    auto part = gdis::partition_graph(net, rc.fractions, resolved.seed);
    auto exposures = gdis::compute_exposures(net, resolved.smoothing_eps);

    auto result = gdis::train(net, exposures, part, rc.hyper);

    write_file(out_dir + "/checkpoint.json",
               result.model.to_json(resolved_config_hash(resolved)));
    write_file(out_dir + "/partition.json", gdis::partition_to_json(part));
    std::ostringstream trace;
    trace.precision(12);
    trace << "epoch,train_mse,hsic,total_loss,val_mse\n";
    for (const auto& r : result.trace)
        trace << r.epoch << ',' << r.train_mse << ',' << r.hsic_value << ',' << r.total << ','
              << r.val_mse << '\n';
    write_file(out_dir + "/loss_trace.csv", trace.str());
    gdis::log_info("training finished: best epoch " + std::to_string(result.best_epoch) +
                   ", best val mse " + std::to_string(result.best_val_mse));
    return 0;
}

json part_metrics(const gdis::EffectEstimates& est, const gdis::GroundTruth& gt,
                  const std::vector<double>& factual_pred, const std::vector<double>& observed,
                  const std::vector<int>& idx) {
    json j;
    j["avg"]["pde"] = gdis::mean_over(est.pde, idx);
    j["avg"]["pie"] = gdis::mean_over(est.pie, idx);
    j["avg"]["ste"] = gdis::mean_over(est.ste, idx);
    j["avg"]["total_peer"] = gdis::mean_over(est.total_peer, idx);
    j["pehe"]["pde"] = gdis::pehe_over(est.pde, gt.pde, idx);
    j["pehe"]["pie"] = gdis::pehe_over(est.pie, gt.pie, idx);
    j["pehe"]["ste"] = gdis::pehe_over(est.ste, gt.ste, idx);
    j["pehe"]["total_peer"] = gdis::pehe_over(est.total_peer, gt.total_peer, idx);
    j["factual_mse"] = gdis::mse_over(factual_pred, observed, idx);
    double cf = gdis::mse_over(est.y_alt_hat, gt.y_alt, idx) +
                gdis::mse_over(est.y_nested_hat, gt.y_nested, idx) +
                gdis::mse_over(est.y_base_hat, gt.y_base, idx);
    j["counterfactual_mse"] = cf / 3.0;
    return j;
}

int cmd_evaluate(const std::string& out_dir, const std::string& checkpoint_path) {
    auto cfg = manifest_config(out_dir);
    auto net = load_dataset(out_dir);
    auto part = gdis::partition_from_json(read_file(out_dir + "/partition.json"));
    auto gt = gdis::GroundTruth::from_json(read_file(out_dir + "/ground_truth.json"));
    auto exposures = gdis::compute_exposures(net, cfg.smoothing_eps);
    auto model = gdis::GdisModel::from_json(
        read_file(checkpoint_path.empty() ? out_dir + "/checkpoint.json" : checkpoint_path));

    auto med = gdis::fit_mediator(exposures, part);
    auto f = gdis::model_outcome_fn(model, net);
    auto g = gdis::mediator_fn(med, exposures);

    gdis::ExposureContrast contrast;  // matches the generate default
    auto est = gdis::estimate_effects(f, g, net, exposures, contrast);

    std::vector<double> factual_pred(net.node_count());
    for (int i = 0; i < net.node_count(); ++i)
        factual_pred[i] = f(i, net.treatments()[i], exposures.treatment_exposure()[i],
                            exposures.contagion_exposure()[i]);

    auto train_idx = part.indices_of(gdis::Part::Train);
    auto test_idx = part.indices_of(gdis::Part::Test);
    json metrics;
    metrics["within"] = part_metrics(est, gt, factual_pred, net.outcomes(), train_idx);
    metrics["out"] = part_metrics(est, gt, factual_pred, net.outcomes(), test_idx);
    metrics["mediator"]["val_r2"] = med.val_r2;
    metrics["mediator"]["ridge_used"] = med.ridge_used;
    write_file(out_dir + "/metrics.json", metrics.dump(2));

    std::ostringstream csv;
    csv.precision(12);
    csv << "unit,part,pde,pie,ste,total_peer,pde_true,pie_true,ste_true,total_peer_true\n";
    for (int i = 0; i < net.node_count(); ++i)
        csv << i << ',' << static_cast<int>(part.assignment[i]) << ',' << est.pde[i] << ','
            << est.pie[i] << ',' << est.ste[i] << ',' << est.total_peer[i] << ',' << gt.pde[i]
            << ',' << gt.pie[i] << ',' << gt.ste[i] << ',' << gt.total_peer[i] << '\n';
    write_file(out_dir + "/effects.csv", csv.str());
    std::cout << metrics.dump(2) << std::endl;
    return 0;
}

int cmd_flip(const std::string& out_dir, const std::string& checkpoint_path,
             const std::string& rates_arg) {
    auto cfg = manifest_config(out_dir);
    auto net = load_dataset(out_dir);
    auto part = gdis::partition_from_json(read_file(out_dir + "/partition.json"));
    auto noise = read_column(out_dir + "/noise.csv");
    auto model = gdis::GdisModel::from_json(
        read_file(checkpoint_path.empty() ? out_dir + "/checkpoint.json" : checkpoint_path));

    std::vector<double> rates;
    std::stringstream ss(rates_arg);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (tok.empty()) continue;
        rates.push_back(std::stod(tok));
    }
    if (rates.empty()) throw gdis::ValidationError("--rates must list at least one value");

    auto f = gdis::model_outcome_fn(model, net);
    auto rows = gdis::flip_rate_experiment(f, net, cfg, noise, part, rates);
    write_file(out_dir + "/flip_rates.csv", gdis::flip_rows_to_csv(rows));
    std::cout << gdis::flip_rows_to_csv(rows);
    return 0;
}

int cmd_report(const std::string& out_dir) {
    std::cout << "== run report: " << out_dir << " ==\n";
    if (fs::exists(out_dir + "/manifest.json")) {
        json manifest = json::parse(read_file(out_dir + "/manifest.json"));
        std::cout << "config hash: " << manifest.at("config_hash").get<std::string>()
                  << ", seed " << manifest.at("seed") << "\n";
    }
    if (fs::exists(out_dir + "/metrics.json")) {
        json metrics = json::parse(read_file(out_dir + "/metrics.json"));
        for (const char* scope : {"within", "out"}) {
            const auto& s = metrics.at(scope);
            std::cout << scope << ": pehe(total)=" << s.at("pehe").at("total_peer")
                      << " pehe(ste)=" << s.at("pehe").at("ste")
                      << " avg(ste)=" << s.at("avg").at("ste")
                      << " factual_mse=" << s.at("factual_mse") << "\n";
        }
    } else {
        std::cout << "no metrics.json yet (run evaluate)\n";
    }
    if (fs::exists(out_dir + "/flip_rates.csv"))
        std::cout << read_file(out_dir + "/flip_rates.csv");
    return 0;
}

int cmd_oracle_check(int trials, std::uint64_t seed, const std::string& scm_path) {
    using namespace gdis;
    bool all_ok = true;
    auto dag = make_summary_dag();

    // Adjustment-set conditions on the summary graph.
    auto ign = verify_sequential_ignorability(dag, {"Wx"});
    bool cond = ign.mediator_outcome_blocked && ign.treatment_paths_blocked;
    std::cout << (cond ? "PASS" : "FAIL")
              << " adjustment-set check: {Wx} satisfies 1G-1 and 1G-2\n";
    all_ok = all_ok && cond;

    auto checks = check_adjustment_proof_paths(dag);
    int blocked = 0;
    for (const auto& c : checks) {
        bool ok = c.exists && c.backdoor && c.blocked;
        if (ok) ++blocked;
        else {
            std::cout << "FAIL path";
            for (const auto& n : c.path.nodes) std::cout << ' ' << n;
            std::cout << '\n';
            all_ok = false;
        }
    }
    std::cout << "PASS " << blocked << "/" << checks.size()
              << " enumerated backdoor paths individually blocked\n";

    // Identification formulas against exact counterfactual enumeration.
    Rng rng(seed);
    double worst = 0.0;
    EffectQuery q;
    for (int t = 0; t < trials; ++t) {
        auto scm = scm_path.empty() ? random_summary_scm(3, rng)
                                    : DiscreteSCM::from_json(read_file(scm_path));
        auto joint = scm.joint();
        worst = std::max(worst, std::abs(identified_pde(joint, q) -
                                         nested_counterfactual_mean(scm, q, PeerEffect::Direct)));
        worst = std::max(worst, std::abs(identified_pie(joint, q) -
                                         nested_counterfactual_mean(scm, q, PeerEffect::Indirect)));
        worst = std::max(worst, std::abs(identified_ste(joint, q) - interventional_ste(scm, q)));
        if (!scm_path.empty()) break;
    }
    bool equiv = worst < 1e-10;
    std::cout << (equiv ? "PASS" : "FAIL") << " identification equivalence over "
              << (scm_path.empty() ? trials : 1) << " SCMs, worst |diff| = " << worst << "\n";
    all_ok = all_ok && equiv;

    std::cout << (all_ok ? "PASS" : "FAIL") << " oracle-check\n";
    return all_ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"group-level peer direct/indirect and self-treatment effect estimation"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, rates = "0.25,0.5,0.75,1";
    std::string scm_path;
    int trials = 100;
    std::uint64_t seed = 1;

    auto* gen = app.add_subcommand("generate", "generate a seeded semi-synthetic dataset");
    gen->add_option("--config", config_path, "run config JSON")->required();
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* expose = app.add_subcommand("expose", "compute influence weights and exposures");
    expose->add_option("--out", out_dir, "dataset directory")->required();

    auto* oracle = app.add_subcommand("oracle-check",
                                      "verify the adjustment conditions and identification "
                                      "formulas on exact discrete models");
    oracle->add_option("--trials", trials, "number of random models");
    oracle->add_option("--seed", seed, "random seed");
    oracle->add_option("--scm", scm_path, "check one SCM specification file instead");

    auto* tr = app.add_subcommand("train", "train the estimator on a generated dataset");
    tr->add_option("--config", config_path, "run config JSON")->required();
    tr->add_option("--out", out_dir, "dataset directory")->required();

    auto* ev = app.add_subcommand("evaluate", "estimate effects and metrics");
    ev->add_option("--out", out_dir, "dataset directory")->required();
    ev->add_option("--checkpoint", checkpoint_path, "checkpoint path override");

    auto* fl = app.add_subcommand("flip", "counterfactual error vs treatment flip rate");
    fl->add_option("--out", out_dir, "dataset directory")->required();
    fl->add_option("--rates", rates, "comma-separated flip rates");
    fl->add_option("--checkpoint", checkpoint_path, "checkpoint path override");

    auto* rp = app.add_subcommand("report", "print a human-readable run summary");
    rp->add_option("--out", out_dir, "dataset directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_generate(config_path, out_dir);
        if (expose->parsed()) return cmd_expose(out_dir);
        if (oracle->parsed()) return cmd_oracle_check(trials, seed, scm_path);
        if (tr->parsed()) return cmd_train(config_path, out_dir);
        if (ev->parsed()) return cmd_evaluate(out_dir, checkpoint_path);
        if (fl->parsed()) return cmd_flip(out_dir, checkpoint_path, rates);
        if (rp->parsed()) return cmd_report(out_dir);
    } catch (const gdis::ValidationError& e) {
        gdis::log_error(e.what());
        return 1;
    } catch (const std::exception& e) {
        gdis::log_error(e.what());
        return 2;
    }
    return 0;
}
