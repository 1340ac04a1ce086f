#include "kao/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "kao/errors.hpp"
#include "kao/image_io.hpp"
#include "kao/metrics.hpp"
#include "kao/sampler.hpp"
#include "kao/scenegen.hpp"
#include "kao/trainer.hpp"

namespace fs = std::filesystem;

namespace kao {

namespace {

std::string index_name(const char* stem, int64_t i, int64_t channels) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%04lld.%s", stem, static_cast<long long>(i),
                  channels == 3 ? "ppm" : "pgm");
    return buf;
}

/// Mask files store {0,1} as bytes {0,255}; anything else is rejected.
Grid read_mask_file(const std::string& path) {
    Grid raw = read_image(path);
    if (raw.extent(0) != 1) throw DataError("mask file must be grayscale: " + path);
    Grid m(raw.shape());
    for (int64_t i = 0; i < raw.numel(); ++i) {
        if (raw[i] <= -0.999f)
            m[i] = 0.0f;
        else if (raw[i] >= 0.999f)
            m[i] = 1.0f;
        else
            throw DataError("non-binary mask file: " + path);
    }
    return m;
}

Grid mask_to_image(const Grid& m) {
    Grid img(m.shape());
    for (int64_t i = 0; i < m.numel(); ++i) img[i] = m[i] > 0.5f ? 1.0f : -1.0f;
    return img;
}

struct ManifestRow {
    std::string scene_file;
    uint64_t seed = 0;
    std::string kind;
    std::string mask_file;
};

std::vector<ManifestRow> read_manifest(const std::string& dir) {
    std::ifstream f(dir + "/manifest.tsv");
    if (!f) throw DataError("missing manifest: " + dir + "/manifest.tsv");
    std::vector<ManifestRow> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        ManifestRow row;
        std::string seed_str;
        if (!std::getline(ss, row.scene_file, '\t') || !std::getline(ss, seed_str, '\t') ||
            !std::getline(ss, row.kind, '\t') || !std::getline(ss, row.mask_file, '\t'))
            throw DataError("malformed manifest row: " + line);
        row.seed = std::stoull(seed_str);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("empty manifest in " + dir);
    return rows;
}

SceneSpec scene_for_index(const RunConfig& cfg, int64_t i) {
    const uint64_t scene_seed = SeededRng(cfg.seed()).split(100 + static_cast<uint64_t>(i)).seed();
    SceneSpec spec = cfg.scene(scene_seed);
    if (cfg.get("data.kind") == "mixed")
        spec.kind = i % 2 == 0 ? SceneSpec::Kind::kRoads : SceneSpec::Kind::kFields;
    return spec;
}

double mean_ssim(const Grid& a, const Grid& b) {
    const int64_t c = a.extent(0), h = a.extent(1), w = a.extent(2);
    double acc = 0.0;
    for (int64_t ci = 0; ci < c; ++ci) {
        Grid ca({1, h, w}), cb({1, h, w});
        for (int64_t p = 0; p < h * w; ++p) {
            ca[p] = a[ci * h * w + p];
            cb[p] = b[ci * h * w + p];
        }
        acc += ssim(ca, cb);
    }
    return acc / static_cast<double>(c);
}

struct AblationRow {
    std::string label;
    CondFlags flags;
    int64_t jumps;
};

std::vector<AblationRow> ablation_rows(const RunConfig& cfg) {
    const int64_t jumps = cfg.get_int("sampler.resample_jumps");
    return {
        {"no-conditioning", {false, 0, false}, 0},
        {"lsc-only", {true, 0, false}, 0},
        {"lsc+1xEP", {true, 1, false}, 0},
        {"full", {true, 2, true}, jumps},
    };
}

DenoiserParams load_checkpoint(const RunConfig& cfg, uint64_t* iteration = nullptr) {
    const std::string path = cfg.get("paths.checkpoint");
    if (!fs::exists(path)) throw DataError("missing checkpoint: " + path);
    return DenoiserParams::load(path, iteration);
}

void write_table(const std::string& path, const std::string& body) {
    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw DataError("cannot write " + tmp);
    f << body;
    f.close();
    fs::rename(tmp, path);
}

}  // namespace

Grid compose_grid(const std::vector<Grid>& row, int64_t separator) {
    if (row.empty()) throw DomainError("compose_grid: empty row");
    const int64_t c = row[0].extent(0), h = row[0].extent(1), w = row[0].extent(2);
    for (const Grid& g : row)
        if (!g.same_shape(row[0])) throw DomainError("compose_grid: mixed extents");
    const int64_t n = static_cast<int64_t>(row.size());
    const int64_t total_w = n * w + (n - 1) * separator;
    Grid out({c, h, total_w});  // separator columns stay at mid-gray 0
    for (int64_t i = 0; i < n; ++i) {
        const int64_t x0 = i * (w + separator);
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) out.at(ci, y, x0 + x) = row[static_cast<size_t>(i)].at(ci, y, x);
    }
    return out;
}

std::vector<std::string> ablation_labels() {
    return {"no-conditioning", "lsc-only", "lsc+1xEP", "full"};
}

void cmd_gen_data(const RunConfig& cfg) {
    const std::string dir = cfg.get("paths.data");
    fs::create_directories(dir);
    cfg.write_resolved(dir + "/resolved_config.txt");

    const int64_t count = cfg.get_int("data.count");
    if (count < 1) throw ConfigError("gen-data: data.count must be positive");
    const double mask_ratio = cfg.get_double("eval.mask_ratio");

    std::string manifest;
    for (int64_t i = 0; i < count; ++i) {
        const SceneSpec spec = scene_for_index(cfg, i);
        const Grid scene = generate_scene(spec);
        SeededRng mask_rng = SeededRng(cfg.seed()).split(200 + static_cast<uint64_t>(i));
        const Grid mask =
            sample_training_mask(spec.size, spec.size, mask_ratio, mask_ratio, mask_rng).m;

        const std::string scene_file = index_name("scene", i, spec.channels);
        const std::string mask_file = index_name("mask", i, 1);
        write_image(scene, dir + "/" + scene_file);
        write_image(mask_to_image(mask), dir + "/" + mask_file);
        manifest += scene_file + "\t" + std::to_string(spec.seed) + "\t" + kind_name(spec.kind) +
                    "\t" + mask_file + "\n";
    }
    write_table(dir + "/manifest.tsv", manifest);
    std::printf("wrote %lld scenes to %s\n", static_cast<long long>(count), dir.c_str());
}

void cmd_train(const RunConfig& cfg) {
    const std::string out = cfg.get("paths.out");
    fs::create_directories(out);
    {
        RunConfig echoed = cfg;
        echoed.embed_schedule(cfg.schedule());
        echoed.write_resolved(out + "/resolved_config.txt");
    }

    const std::string data_dir = cfg.get("paths.data");
    const auto manifest = read_manifest(data_dir);
    std::vector<Grid> dataset;
    dataset.reserve(manifest.size());
    for (const auto& row : manifest) dataset.push_back(read_image(data_dir + "/" + row.scene_file));

    const NoiseSchedule sched = cfg.schedule();
    const TrainConfig tcfg = cfg.trainer();

    uint64_t start_iter = 0;
    DenoiserParams params;
    if (cfg.get_bool("train.resume")) {
        params = load_checkpoint(cfg, &start_iter);
    } else {
        SeededRng init_rng = SeededRng(cfg.seed()).split(77);
        params = DenoiserParams(cfg.denoiser(), init_rng);
    }

    const TrainResult res = train(dataset, tcfg, sched, params, start_iter);
    params.save(cfg.get("paths.checkpoint"), res.final_iteration);
    write_loss_table(out + "/loss.tsv", res.loss_history, start_iter);
    std::printf("trained to iteration %llu; final loss %.9g\n",
                static_cast<unsigned long long>(res.final_iteration),
                res.loss_history.empty() ? 0.0 : res.loss_history.back());
}

void cmd_inpaint(const RunConfig& cfg, const std::string& image_path,
                 const std::string& mask_path) {
    const std::string out = cfg.get("paths.out");
    fs::create_directories(out);
    {
        RunConfig echoed = cfg;
        echoed.embed_schedule(cfg.schedule());
        echoed.write_resolved(out + "/resolved_config.txt");
    }

    DenoiserParams params = load_checkpoint(cfg);
    const Grid image = read_image(image_path);
    const Grid mask = read_mask_file(mask_path);  // 1 = known pixel
    const NoiseSchedule sched = cfg.schedule();
    const SamplerConfig scfg = cfg.sampler();

    SeededRng rng = SeededRng(cfg.seed()).split(5);
    const auto t0 = std::chrono::steady_clock::now();
    const SampleResult res = inpaint(image, mask, params, sched, scfg, rng);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    write_image(res.x0, out + "/" + index_name("inpainted", 0, image.extent(0)));
    std::printf("forward_passes %lld\nwall_seconds %.3f\n",
                static_cast<long long>(res.forward_passes), seconds);
}

void cmd_eval(const RunConfig& cfg, const std::string& dataset_dir) {
    const std::string out = cfg.get("paths.out");
    fs::create_directories(out);
    {
        RunConfig echoed = cfg;
        echoed.embed_schedule(cfg.schedule());
        echoed.write_resolved(out + "/resolved_config.txt");
    }

    DenoiserParams params = load_checkpoint(cfg);
    const NoiseSchedule sched = cfg.schedule();
    const auto manifest = read_manifest(dataset_dir);
    const int64_t count =
        std::min<int64_t>(cfg.get_int("eval.count"), static_cast<int64_t>(manifest.size()));
    if (count < 1) throw ConfigError("eval: eval.count must be positive");
    const bool write_images = cfg.get_bool("eval.write_images");
    const int64_t threads = std::max<int64_t>(1, cfg.get_int("eval.threads"));

    std::vector<Grid> targets, occlusions;
    for (int64_t i = 0; i < count; ++i) {
        targets.push_back(read_image(dataset_dir + "/" + manifest[static_cast<size_t>(i)].scene_file));
        occlusions.push_back(
            read_mask_file(dataset_dir + "/" + manifest[static_cast<size_t>(i)].mask_file));
    }

    if (write_images)
        for (int64_t i = 0; i < count; ++i) {
            Grid masked = targets[static_cast<size_t>(i)];
            const Grid& occ = occlusions[static_cast<size_t>(i)];
            const int64_t hw = occ.numel();
            for (int64_t ci = 0; ci < masked.extent(0); ++ci)
                for (int64_t p = 0; p < hw; ++p)
                    if (occ[p] == 1.0f) masked[ci * hw + p] = -1.0f;
            write_image(masked, out + "/" + index_name("input", i, masked.extent(0)));
            write_image(targets[static_cast<size_t>(i)],
                        out + "/" + index_name("target", i, masked.extent(0)));
        }

    std::string table = "config\tmasked_mse\tpsnr\tssim\n";
    for (const AblationRow& row : ablation_rows(cfg)) {
        SamplerConfig scfg;
        scfg.resample_jumps = row.jumps;
        scfg.flags = row.flags;
        scfg.kernel = cfg.kernel();

        std::vector<double> mses(static_cast<size_t>(count)), psnrs(static_cast<size_t>(count)),
            ssims(static_cast<size_t>(count));
        std::vector<Grid> outputs(static_cast<size_t>(count));
        std::exception_ptr failure;
        std::mutex failure_mu;

        auto worker = [&](int64_t begin, int64_t end) {
            for (int64_t i = begin; i < end; ++i) {
                try {
                    const Grid& gt = targets[static_cast<size_t>(i)];
                    const Grid& occ = occlusions[static_cast<size_t>(i)];
                    Grid cond_mask(occ.shape());
                    for (int64_t p = 0; p < occ.numel(); ++p) cond_mask[p] = 1.0f - occ[p];
                    // per-item stream: row differences come only from the
                    // sampler configuration, not the seed path
                    SeededRng rng = SeededRng(cfg.seed()).split(4000 + static_cast<uint64_t>(i));
                    const SampleResult res = inpaint(gt, cond_mask, params, sched, scfg, rng);
                    mses[static_cast<size_t>(i)] = masked_mse(res.x0, gt, occ);
                    psnrs[static_cast<size_t>(i)] = psnr(res.x0, gt, 2.0);
                    ssims[static_cast<size_t>(i)] = mean_ssim(res.x0, gt);
                    outputs[static_cast<size_t>(i)] = res.x0;
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mu);
                    if (!failure) failure = std::current_exception();
                    return;
                }
            }
        };

        if (threads == 1) {
            worker(0, count);
        } else {
            std::vector<std::thread> pool;
            const int64_t chunk = (count + threads - 1) / threads;
            for (int64_t t = 0; t < threads && t * chunk < count; ++t)
                pool.emplace_back(worker, t * chunk, std::min(count, (t + 1) * chunk));
            for (auto& th : pool) th.join();
        }
        if (failure) std::rethrow_exception(failure);

        double mse = 0, ps = 0, ss = 0;
        for (int64_t i = 0; i < count; ++i) {
            mse += mses[static_cast<size_t>(i)];
            ps += psnrs[static_cast<size_t>(i)];
            ss += ssims[static_cast<size_t>(i)];
        }
        const double n = static_cast<double>(count);
        char line[256];
        std::snprintf(line, sizeof(line), "%s\t%.9g\t%.9g\t%.9g\n", row.label.c_str(), mse / n,
                      ps / n, ss / n);
        table += line;

        if (write_images) {
            fs::create_directories(out + "/" + row.label);
            for (int64_t i = 0; i < count; ++i)
                write_image(outputs[static_cast<size_t>(i)],
                            out + "/" + row.label + "/" +
                                index_name("out", i, outputs[static_cast<size_t>(i)].extent(0)));
        }
        std::printf("%s", line);
    }
    write_table(out + "/eval_table.tsv", table);
}

void cmd_figures(const RunConfig& cfg, const std::string& eval_dir) {
    const std::string out = cfg.get("paths.out");
    fs::create_directories(out);
    cfg.write_resolved(out + "/resolved_config.txt");

    const int64_t rows = cfg.get_int("figures.rows");
    if (rows < 1) throw ConfigError("figures: figures.rows must be positive");
    const int64_t channels = cfg.get_int("data.channels");

    for (int64_t i = 0; i < rows; ++i) {
        std::vector<Grid> row;
        row.push_back(read_image(eval_dir + "/" + index_name("input", i, channels)));
        row.push_back(read_image(eval_dir + "/" + index_name("target", i, channels)));
        for (const std::string& label : ablation_labels())
            row.push_back(read_image(eval_dir + "/" + label + "/" + index_name("out", i, channels)));
        write_image(compose_grid(row), out + "/" + index_name("figure", i, channels));
    }
    std::printf("wrote %lld figure grids to %s\n", static_cast<long long>(rows), out.c_str());
}

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Kernel-adaptive diffusion inpainting toolkit"};
    app.require_subcommand(1);

    std::string config_path, out_override, image_path, mask_path, dataset_dir, eval_dir;
    int64_t seed_override = 0;
    bool have_seed = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "run configuration file")->required();
        sub->add_option("--seed", seed_override, "override the config seed")
            ->each([&](const std::string&) { have_seed = true; });
        sub->add_option("--out", out_override, "override the output directory");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic scene dataset");
    add_common(gen);
    CLI::App* train_cmd = app.add_subcommand("train", "train the denoiser");
    add_common(train_cmd);
    CLI::App* inpaint_cmd = app.add_subcommand("inpaint", "inpaint one image (mask: 255 = keep)");
    add_common(inpaint_cmd);
    inpaint_cmd->add_option("image", image_path, "input image (P5/P6)")->required();
    inpaint_cmd->add_option("mask", mask_path, "binary mask (P5, 255 = known pixel)")->required();
    CLI::App* eval_cmd = app.add_subcommand("eval", "run the four-configuration ablation table");
    add_common(eval_cmd);
    eval_cmd->add_option("dataset", dataset_dir, "eval dataset directory (default paths.data)");
    CLI::App* figures_cmd = app.add_subcommand("figures", "compose comparison grids");
    add_common(figures_cmd);
    figures_cmd->add_option("evaldir", eval_dir, "eval output directory (default paths.out)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg = RunConfig::parse_file(config_path);
        if (have_seed) cfg.set("seed", std::to_string(seed_override));
        if (!out_override.empty()) cfg.set("paths.out", out_override);

        if (gen->parsed()) cmd_gen_data(cfg);
        if (train_cmd->parsed()) cmd_train(cfg);
        if (inpaint_cmd->parsed()) cmd_inpaint(cfg, image_path, mask_path);
        if (eval_cmd->parsed())
            cmd_eval(cfg, dataset_dir.empty() ? cfg.get("paths.data") : dataset_dir);
        if (figures_cmd->parsed())
            cmd_figures(cfg, eval_dir.empty() ? cfg.get("paths.out") : eval_dir);
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
}

}  // namespace kao
