#include "gradleak/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "gradleak/attack.hpp"
#include "gradleak/data_io.hpp"
#include "gradleak/errors.hpp"
#include "gradleak/fedsim.hpp"
#include "gradleak/model.hpp"

#ifndef GRADLEAK_VERSION
#define GRADLEAK_VERSION "0.0.0"
#endif

namespace gradleak::harness {

std::string version() { return GRADLEAK_VERSION; }

std::string sample_id(std::size_t dataset_index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%05zu", dataset_index);
    return buf;
}

const OutcomeRecord& ExperimentReport::outcome(std::size_t controller, std::size_t position) const {
    const std::size_t n = sample_count();
    if (controller >= rows.size() || position >= n) throw InvalidArgument("ExperimentReport::outcome: out of range");
    return outcomes[controller * n + position];
}

std::size_t ExperimentReport::sample_count() const { return rows.empty() ? 0 : outcomes.size() / rows.size(); }

namespace {

io::Dataset load_dataset(const ExperimentConfig& config) {
    const auto& d = config.dataset;
    if (d.name == "mnist") return io::load_mnist(d.images, d.labels);
    if (d.name == "cifar10") return io::load_cifar10(d.batches);
    if (d.name == "synthetic") {
        return io::synth_dataset(d.shape, d.classes, d.count.value_or(config.samples),
                                 d.seed.value_or(config.base_seed));
    }
    throw ConfigError("unknown dataset '" + d.name + "'", 0);
}

std::vector<std::size_t> select_samples(std::size_t available, std::size_t k, std::uint64_t seed) {
    if (k > available) {
        throw InvalidArgument("requested " + std::to_string(k) + " samples but the dataset has " +
                              std::to_string(available));
    }
    std::vector<std::size_t> order(available);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(k);
    return order;
}

ModelSpec model_spec_for(const ExperimentConfig& config, const io::Dataset& data) {
    ModelSpec spec = config.model;
    spec.input_shape = data.image_shape;
    spec.classes = data.classes;
    spec.validate();
    return spec;
}

std::string utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config, const ProgressFn& progress) {
    validate(config);
    const auto wall_start = std::chrono::steady_clock::now();

    ExperimentReport report;
    auto& prov = report.provenance;
    prov.version = version();
    prov.dataset = config.dataset.name;
    prov.base_seed = config.base_seed;
    prov.model_seed = config.effective_model_seed();
    prov.selection_seed = config.effective_selection_seed();
    prov.config_source = config.source;
    prov.started_at = utc_now();
    prov.jobs = config.jobs;

    const io::Dataset data = load_dataset(config);
    prov.selected = select_samples(data.size(), config.samples, prov.selection_seed);
    const Model model =
        init_uniform(model_spec_for(config, data), prov.model_seed, config.init_low, config.init_high);

    // The server's view of each sample: the single-sample client update.
    std::vector<ad::GradientSet> targets;
    targets.reserve(prov.selected.size());
    for (std::size_t pos = 0; pos < prov.selected.size(); ++pos) {
        const Sample& s = data.samples[prov.selected[pos]];
        fed::ClientDataset client{"client-" + sample_id(prov.selected[pos]), {s}};
        targets.push_back(fed::capture(fed::client_compute_update(model, client)));
        prov.dummy_seeds.push_back(config.dummy_seed(pos));
    }

    const auto controllers = config.controllers.expand();
    for (const auto& c : controllers) {
        report.rows.push_back(ControllerRow{c.label(), c.kind(), c.threshold_value(), c.patience(), {}});
    }

    const std::size_t n = prov.selected.size();
    report.outcomes.resize(controllers.size() * n);
    std::atomic<std::size_t> next{0};
    std::mutex progress_mutex;

    auto work = [&] {
        for (std::size_t task = next++; task < report.outcomes.size(); task = next++) {
            const std::size_t ci = task / n;
            const std::size_t pos = task % n;
            const std::size_t index = prov.selected[pos];
            const Sample& sample = data.samples[index];

            attack::AttackConfig attack_config = config.attack;
            attack_config.dummy_seed = prov.dummy_seeds[pos];
            stop::StopController controller = controllers[ci];
            controller.reset();

            OutcomeRecord rec;
            rec.controller = ci;
            rec.position = pos;
            rec.dataset_index = index;
            rec.true_label = sample.label;
            rec.original = sample.image;
            attack::AttackResult result;
            try {
                result = attack::run_attack(model, targets[pos], attack_config, controller);
            } catch (const attack::AttackError& e) {
                result = e.partial();
                rec.error = e.what();
            }
            rec.inferred_label = result.label;
            rec.loss_history = std::move(result.loss_history);
            rec.reconstruction = result.reconstruction;

            auto& out = rec.outcome;
            out.sample_id = sample_id(index);
            out.iterations = result.iterations;
            out.seconds = result.seconds;
            out.cause = result.cause;
            if (rec.error.empty() && result.reconstruction.shape() == sample.image.shape()) {
                out.mse = metrics::mse(sample.image, result.reconstruction);
                out.ssim = metrics::ssim(sample.image, result.reconstruction,
                                         metrics::ssim_options_for(sample.image.shape()));
            } else {
                out.mse = std::nan("");
                out.ssim = std::nan("");
            }
            out.success = metrics::attack_success(out.ssim);

            report.outcomes[task] = std::move(rec);
            if (progress) {
                std::lock_guard lock(progress_mutex);
                progress(report.rows[ci], report.outcomes[task]);
            }
        }
    };

    const std::size_t workers = std::min(config.jobs, report.outcomes.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    for (std::size_t ci = 0; ci < report.rows.size(); ++ci) {
        std::vector<metrics::SampleOutcome> outcomes;
        for (std::size_t pos = 0; pos < n; ++pos) outcomes.push_back(report.outcomes[ci * n + pos].outcome);
        report.rows[ci].summary = metrics::summarize(outcomes);
    }
    prov.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    return report;
}

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

void close_out(std::ofstream& out, const std::filesystem::path& path) {
    out.close();
    if (!out) throw Error("error writing " + path.string());
}

std::string image_ext(const Tensor& image) { return image.shape()[0] == 3 ? ".ppm" : ".pgm"; }

}  // namespace

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir, bool images) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const auto& prov = report.provenance;

    {
        const auto path = dir / "summary.csv";
        auto out = open_out(path);
        out << kSummaryHeader << '\n';
        for (const auto& row : report.rows) {
            const bool has_t = row.kind == stop::ControllerKind::threshold || row.kind == stop::ControllerKind::hybrid;
            const bool has_p = row.kind == stop::ControllerKind::plateau || row.kind == stop::ControllerKind::hybrid;
            const auto& s = row.summary;
            out << prov.dataset << ',' << row.label << ',' << (has_t ? num(row.threshold) : "") << ','
                << (has_p ? std::to_string(row.patience) : "") << ',' << num(s.asr) << ',' << num(s.mse_avg) << ','
                << num(s.ssim_avg) << ',' << num(s.recon_time_s) << ',' << num(s.iter_max) << ','
                << num(s.iter_min) << ',' << num(s.iter_avg) << ',' << num(s.iter_sd) << '\n';
        }
        close_out(out, path);
    }

    {
        const auto path = dir / "outcomes.csv";
        auto out = open_out(path);
        out << "controller,sample_id,position,true_label,inferred_label,success,mse,ssim,iterations,seconds,cause,"
               "error\n";
        for (const auto& rec : report.outcomes) {
            const auto& o = rec.outcome;
            std::string error = rec.error;
            std::replace(error.begin(), error.end(), ',', ';');
            std::replace(error.begin(), error.end(), '\n', ' ');
            out << report.rows[rec.controller].label << ',' << o.sample_id << ',' << rec.position << ','
                << rec.true_label << ',' << rec.inferred_label << ',' << (o.success ? 1 : 0) << ',' << num(o.mse)
                << ',' << num(o.ssim) << ',' << o.iterations << ',' << num(o.seconds) << ','
                << stop::to_string(o.cause) << ',' << error << '\n';
        }
        close_out(out, path);
    }

    for (const auto& rec : report.outcomes) {
        const auto& label = report.rows[rec.controller].label;
        const fs::path loss_dir = dir / "loss" / label;
        fs::create_directories(loss_dir);
        io::write_loss_curve(rec.loss_history, loss_dir / ("loss_" + rec.outcome.sample_id + ".csv"));
        if (!images) continue;
        const fs::path orig_dir = dir / "original";
        const fs::path recon_dir = dir / "reconstructed" / label;
        fs::create_directories(orig_dir);
        fs::create_directories(recon_dir);
        if (rec.controller == 0) io::write_image(rec.original, orig_dir / (rec.outcome.sample_id + image_ext(rec.original)));
        if (rec.reconstruction.shape() == rec.original.shape()) {
            io::write_image(rec.reconstruction, recon_dir / (rec.outcome.sample_id + image_ext(rec.reconstruction)));
        }
    }

    nlohmann::json j;
    j["version"] = prov.version;
    j["dataset"] = prov.dataset;
    j["seeds"] = {{"base", prov.base_seed},
                  {"model", prov.model_seed},
                  {"selection", prov.selection_seed},
                  {"dummy", prov.dummy_seeds}};
    j["selected"] = prov.selected;
    j["controllers"] = nlohmann::json::array();
    for (const auto& row : report.rows) j["controllers"].push_back(row.label);
    j["jobs"] = prov.jobs;
    j["started_at"] = prov.started_at;
    j["wall_seconds"] = prov.wall_seconds;
    j["config"] = prov.config_source;
    const auto path = dir / "provenance.json";
    auto out = open_out(path);
    out << j.dump(2) << '\n';
    close_out(out, path);
}

}  // namespace gradleak::harness
