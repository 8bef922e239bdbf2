#include "polcolor/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polcolor/checkpoint.hpp"
#include "polcolor/decomp.hpp"
#include "polcolor/errors.hpp"
#include "polcolor/evalmetrics.hpp"
#include "polcolor/pipeline.hpp"
#include "polcolor/rasterio.hpp"
#include "polcolor/synthdata.hpp"

namespace fs = std::filesystem;

namespace polcolor {

namespace {

const std::map<std::string, Channel> kChannels{{"hh", Channel::HH}, {"hv", Channel::HV}, {"vv", Channel::VV}};
const std::map<std::string, DecodeRule> kRules{{"mode", DecodeRule::Mode}, {"mean", DecodeRule::Mean}};
const std::map<std::string, RegionModel> kModels{
    {"voronoi", RegionModel::Voronoi}, {"blobs", RegionModel::Blobs}, {"stripes", RegionModel::Stripes}};
const std::map<std::string, Precision> kPrecisions{{"single", Precision::Single}, {"double", Precision::Double}};

std::string channel_key(Channel c) {
    for (const auto& [k, v] : kChannels)
        if (v == c) return k;
    return "vv";
}

struct SynthArgs {
    fs::path out;
    SceneSpec spec;
    std::string model = "voronoi";
};

struct TrainArgs {
    std::vector<fs::path> data;
    fs::path out;
    fs::path resume;
    std::string scale = "desk";
    std::string channel = "vv";
    std::string precision = "single";
    TrainConfig config;
    bool freeze_extractor = false;
};

struct ColorizeArgs {
    fs::path input;
    fs::path checkpoint;
    fs::path out;
    std::string channel = "vv";
    std::string decode = "mode";
};

struct EvalArgs {
    fs::path recon;
    fs::path truth;
    fs::path checkpoint;
    fs::path out;
};

struct DecompArgs {
    fs::path input;
    fs::path out;
    std::string method;
};

void prepare_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create output directory " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << text;
    if (!out) throw InvalidInput("failed writing " + path.string());
}

/// Effective configuration of the selected subcommand, loadable with --config.
void log_config(const CLI::App& sub, const fs::path& dir) {
    std::ostringstream os;
    os << "# effective configuration\n";
    os << '[' << sub.get_name() << "]\n";
    for (const CLI::Option* opt : sub.get_options()) {
        if (opt->get_lnames().empty() || opt->get_name() == "--help") continue;
        const std::string name = opt->get_lnames().front();
        std::vector<std::string> values = opt->results();
        if (values.empty() && !opt->get_default_str().empty()) values = {opt->get_default_str()};
        if (values.empty()) continue;
        os << name << '=';
        if (values.size() > 1) os << '[';
        for (std::size_t i = 0; i < values.size(); ++i) os << (i ? "," : "") << std::quoted(values[i]);
        if (values.size() > 1) os << ']';
        os << '\n';
    }
    write_text(dir / "effective_config.txt", os.str());
}

void cmd_synth(const SynthArgs& a, std::ostream& out) {
    SceneSpec spec = a.spec;
    spec.model = kModels.at(a.model);
    validate(spec);
    const auto archetypes = default_archetypes();
    if (spec.classes > static_cast<int>(archetypes.size()))
        throw InvalidInput("at most " + std::to_string(archetypes.size()) + " classes are available");
    const Scene scene = render_scene(spec, archetypes);

    prepare_dir(a.out);
    write_raster(a.out / "cov.pras", to_raster(scene.covariance));
    write_raster(a.out / "hh.pras", to_raster(scene.hh));
    write_raster(a.out / "hv.pras", to_raster(scene.hv));
    write_raster(a.out / "vv.pras", to_raster(scene.vv));
    write_raster(a.out / "classes.pras", to_raster(scene.classes));

    std::ostringstream m;
    m << "width=" << spec.width << "\nheight=" << spec.height << "\nseed=" << spec.seed << "\nmodel=" << a.model
      << "\nlooks=" << spec.looks << "\nclasses=" << spec.classes << '\n';
    for (int c = 0; c < spec.classes; ++c) {
        const auto& arch = archetypes[static_cast<std::size_t>(c)];
        m << "class." << c << '=' << arch.name << '\n';
    }
    m << "files=cov.pras,hh.pras,hv.pras,vv.pras,classes.pras\n";
    write_text(a.out / "manifest.txt", m.str());
    out << "synth: wrote " << spec.width << "x" << spec.height << " scene to " << a.out.string() << '\n';
}

TrainingScene load_training_scene(const fs::path& dir, Channel channel) {
    const fs::path cov = dir / "cov.pras";
    const fs::path input = dir / (channel_key(channel) + ".pras");
    for (const auto& p : {cov, input})
        if (!fs::exists(p)) throw InvalidInput("missing plane " + p.string());
    TrainingScene s;
    s.truth = covariance_from_raster(read_raster(cov));
    s.intensity = plane_from_raster(read_raster(input));
    return s;
}

void cmd_train(const TrainArgs& a, std::ostream& out) {
    if (a.data.empty()) throw InvalidInput("train needs at least one --data directory");
    std::optional<ModelCheckpoint> resume;
    if (!a.resume.empty()) resume = load_checkpoint(a.resume);
    const Channel channel = resume ? resume->train.channel : kChannels.at(a.channel);

    std::vector<TrainingScene> data;
    for (const auto& d : a.data) data.push_back(load_training_scene(d, channel));

    prepare_dir(a.out);
    auto progress = [&out](int epoch, double loss) {
        out << "epoch " << epoch + 1 << " mean loss " << std::setprecision(10) << loss << '\n';
    };
    TrainResult result;
    std::uint64_t first_step = 0;
    if (resume) {
        first_step = resume->adam.step_count;
        result = resume_training(data, *resume, a.config.epochs, progress);
    } else {
        TrainConfig config = a.config;
        config.channel = channel;
        config.precision = kPrecisions.at(a.precision);
        config.train_extractor = !a.freeze_extractor;
        const bool full = a.scale == "full";
        result = train(data, full ? ExtractorConfig::full() : ExtractorConfig::desk(),
                       full ? TranslatorConfig::full() : TranslatorConfig::desk(), config, progress);
    }
    save_checkpoint(result.checkpoint, a.out / "model.pckp");

    std::ostringstream csv;
    csv << "step,epoch,loss\n" << std::setprecision(17);
    for (std::size_t i = 0; i < result.step_losses.size(); ++i)
        csv << first_step + i + 1 << ',' << result.step_epochs[i] + 1 << ',' << result.step_losses[i] << '\n';
    write_text(a.out / "loss.csv", csv.str());
    out << "train: " << result.step_losses.size() << " steps, checkpoint " << (a.out / "model.pckp").string() << '\n';
}

void cmd_colorize(const ColorizeArgs& a, std::ostream& out) {
    const Plane intensity = plane_from_raster(read_raster(a.input));
    const ModelCheckpoint ckpt = load_checkpoint(a.checkpoint);
    ColorizeOptions options;
    options.channel = kChannels.at(a.channel);
    options.rule = kRules.at(a.decode);
    const ColorizeResult r = colorize(intensity, ckpt, options);

    prepare_dir(a.out);
    const PolRaster cov = to_raster(r.covariance);
    write_raster(a.out / "cov.pras", cov);
    write_raster(a.out / "params.pras", to_raster(r.params, r.covariance.width, r.covariance.height));
    write_raster(a.out / "flags.pras", to_raster(r.flags));
    export_png(cov, PngMode::Pauli, a.out / "pauli.png");

    long psd_fail = 0, consistency_fail = 0, fallback = 0;
    const int c = static_cast<int>(options.channel);
    for (int y = 0; y < r.covariance.height; ++y)
        for (int x = 0; x < r.covariance.width; ++x) {
            const PolFeature f = from_params(r.params[static_cast<std::size_t>(y) * r.covariance.width + x]);
            if (!psd_check(f).satisfied) ++psd_fail;
            if (r.flags(y, x) & kPowerFallback) {
                ++fallback;
            } else if (r.covariance.at(y, x)(c, c).real() != intensity(y, x)) {
                ++consistency_fail;
            }
        }
    std::ostringstream audit;
    audit << "pixels=" << intensity.size() << "\npsd_failures=" << psd_fail
          << "\nchannel_mismatches=" << consistency_fail << "\npower_fallbacks=" << fallback << '\n';
    write_text(a.out / "audit.txt", audit.str());
    out << "colorize: " << audit.str();
    if (psd_fail || consistency_fail) throw NumericalFailure("colorize output failed its consistency audit");
}

void cmd_eval(const EvalArgs& a, std::ostream& out) {
    const CovarianceImage recon = covariance_from_raster(read_raster(a.recon));
    const CovarianceImage truth = covariance_from_raster(read_raster(a.truth));
    std::optional<ModelCheckpoint> ckpt;
    if (!a.checkpoint.empty()) ckpt = load_checkpoint(a.checkpoint);
    const MetricReport report = evaluate(recon, truth, ckpt ? &ckpt->quantizers : nullptr);

    prepare_dir(a.out);
    write_metrics_csv(report, a.out / "metrics.csv");
    const PolRaster map = to_raster(report.bartlett_map);
    write_raster(a.out / "bartlett.pras", map);
    export_png(map, PngMode::GrayLinear, a.out / "bartlett.png");
    out << "eval: median Bartlett distance " << std::setprecision(6) << report.bartlett_median << '\n';
}

void cmd_decomp(const DecompArgs& a, std::ostream& out) {
    const PolRaster raster = read_raster(a.input);
    const CovarianceImage img = covariance_from_raster(raster);
    prepare_dir(a.out);
    const int w = img.width, h = img.height;
    if (a.method == "pauli" || a.method == "freeman") {
        std::array<Plane, 3> planes{Plane(h, w), Plane(h, w), Plane(h, w)};
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                std::array<double, 3> v;
                if (a.method == "pauli") {
                    const PauliRgb p = pauli_rgb(img.at(y, x));
                    v = {p.r, p.g, p.b};
                } else {
                    const FreemanPowers f = freeman_durden(img.at(y, x));
                    v = {f.ps, f.pd, f.pv};
                }
                for (std::size_t k = 0; k < 3; ++k) planes[k](y, x) = v[k];
            }
        const std::array<const char*, 3> names =
            a.method == "pauli" ? std::array<const char*, 3>{"pauli_r", "pauli_g", "pauli_b"}
                                : std::array<const char*, 3>{"freeman_ps", "freeman_pd", "freeman_pv"};
        for (std::size_t k = 0; k < 3; ++k) write_raster(a.out / (std::string(names[k]) + ".pras"), to_raster(planes[k]));
        export_png(raster, a.method == "pauli" ? PngMode::Pauli : PngMode::Freeman, a.out / (a.method + ".png"));
    } else {
        Plane entropy(h, w), alpha(h, w);
        LabelPlane zones(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                const HAlpha ha = cloude_pottier(covariance_to_coherency(img.at(y, x)));
                entropy(y, x) = ha.entropy;
                alpha(y, x) = ha.alpha_deg;
                zones(y, x) = h_alpha_classify(ha.entropy, ha.alpha_deg);
            }
        write_raster(a.out / "entropy.pras", to_raster(entropy));
        write_raster(a.out / "alpha.pras", to_raster(alpha));
        const PolRaster z = to_raster(zones);
        write_raster(a.out / "zones.pras", z);
        export_png(z, PngMode::HAlphaZones, a.out / "zones.png");
    }
    out << "decomp: " << a.method << " written to " << a.out.string() << '\n';
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Single-polarization to full-polarization SAR colorization", "polcolor"};
    app.set_config("--config", "", "Read options from a config file ([subcommand] sections of key=value)");
    app.require_subcommand(1);

    SynthArgs synth;
    auto* s = app.add_subcommand("synth", "Generate a synthetic full-pol scene");
    s->add_option("--out", synth.out, "Output directory")->required();
    s->add_option("--width", synth.spec.width, "Width in pixels")->capture_default_str();
    s->add_option("--height", synth.spec.height, "Height in pixels")->capture_default_str();
    s->add_option("--seed", synth.spec.seed, "Random seed")->capture_default_str();
    s->add_option("--classes", synth.spec.classes, "Number of classes")->capture_default_str();
    s->add_option("--looks", synth.spec.looks, "Looks per pixel")->capture_default_str();
    s->add_option("--regions", synth.spec.regions, "Region count (0 = default)")->capture_default_str();
    s->add_option("--model", synth.model, "Region model")
        ->check(CLI::IsMember({"voronoi", "blobs", "stripes"}))
        ->capture_default_str();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a colorization model");
    t->add_option("--data", tr.data, "Scene directory (repeatable)")->required();
    t->add_option("--out", tr.out, "Output directory")->required();
    t->add_option("--resume", tr.resume, "Continue from this checkpoint");
    t->add_option("--epochs", tr.config.epochs, "Total epochs")->capture_default_str();
    t->add_option("--batch", tr.config.batch_pixels, "Pixels per mini-batch")->capture_default_str();
    t->add_option("--patch", tr.config.patch, "Patch size")->capture_default_str();
    t->add_option("--lr", tr.config.adam.learning_rate, "Adam learning rate")->capture_default_str();
    t->add_option("--seed", tr.config.seed, "Random seed")->capture_default_str();
    t->add_option("--db-floor", tr.config.db_floor, "Lowest dB of the input mapping")->capture_default_str();
    t->add_option("--channel", tr.channel, "Input channel")->check(CLI::IsMember({"hh", "hv", "vv"}))->capture_default_str();
    t->add_option("--precision", tr.precision, "Training precision")
        ->check(CLI::IsMember({"single", "double"}))
        ->capture_default_str();
    t->add_option("--scale", tr.scale, "Network size")->check(CLI::IsMember({"desk", "full"}))->capture_default_str();
    t->add_flag("--freeze-extractor", tr.freeze_extractor, "Train only the translator");

    ColorizeArgs co;
    auto* c = app.add_subcommand("colorize", "Reconstruct full-pol covariance from one intensity channel");
    c->add_option("--input", co.input, "GRAY1 intensity raster")->required();
    c->add_option("--checkpoint", co.checkpoint, "Model checkpoint")->required();
    c->add_option("--out", co.out, "Output directory")->required();
    c->add_option("--channel", co.channel, "Input channel")->check(CLI::IsMember({"hh", "hv", "vv"}))->capture_default_str();
    c->add_option("--decode", co.decode, "Decoding rule")->check(CLI::IsMember({"mode", "mean"}))->capture_default_str();

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Compare a reconstruction with the truth");
    e->add_option("--recon", ev.recon, "Reconstructed COV9 raster")->required();
    e->add_option("--truth", ev.truth, "True COV9 raster")->required();
    e->add_option("--checkpoint", ev.checkpoint, "Checkpoint whose quantizers define the quantization error");
    e->add_option("--out", ev.out, "Output directory")->required();

    DecompArgs de;
    auto* d = app.add_subcommand("decomp", "Polarimetric decompositions of a COV9 raster");
    d->add_option("--input", de.input, "COV9 raster")->required();
    d->add_option("--method", de.method, "Decomposition")->check(CLI::IsMember({"pauli", "freeman", "halpha"}))->required();
    d->add_option("--out", de.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& ex) {
        const int code = app.exit(ex, out, err);
        return code == 0 ? kExitOk : kExitInvalidInput;
    }

    try {
        if (s->parsed()) {
            cmd_synth(synth, out);
            log_config(*s, synth.out);
        } else if (t->parsed()) {
            cmd_train(tr, out);
            log_config(*t, tr.out);
        } else if (c->parsed()) {
            cmd_colorize(co, out);
            log_config(*c, co.out);
        } else if (e->parsed()) {
            cmd_eval(ev, out);
            log_config(*e, ev.out);
        } else if (d->parsed()) {
            cmd_decomp(de, out);
            log_config(*d, de.out);
        }
    } catch (const NumericalFailure& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitNumericalFailure;
    } catch (const std::invalid_argument& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitInvalidInput;
    } catch (const fs::filesystem_error& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitInvalidInput;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << '\n';
        return kExitNumericalFailure;
    }
    return kExitOk;
}

}  // namespace polcolor
