#include "pxrl/cli.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>

#include "pxrl/harness.hpp"

namespace fs = std::filesystem;

namespace pxrl {

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("PXRL_OUT_ROOT")) return env;
    return "runs";
}

// '*' wildcard match within one path component
bool wild_match(const std::string& pattern, const std::string& text) {
    size_t p = 0, t = 0, star = std::string::npos, mark = 0;
    while (t < text.size()) {
        if (p < pattern.size() && (pattern[p] == text[t])) {
            ++p;
            ++t;
        } else if (p < pattern.size() && pattern[p] == '*') {
            star = p++;
            mark = t;
        } else if (star != std::string::npos) {
            p = star + 1;
            t = ++mark;
        } else {
            return false;
        }
    }
    while (p < pattern.size() && pattern[p] == '*') ++p;
    return p == pattern.size();
}

std::vector<std::string> expand_runs_glob(const std::string& pattern) {
    std::vector<std::string> parts;
    for (const auto& part : fs::path(pattern)) parts.push_back(part.string());
    std::vector<fs::path> frontier = {fs::path(pattern).is_absolute() ? fs::path("/") : fs::path(".")};
    for (const auto& part : parts) {
        if (part == "/" || part.empty()) continue;
        std::vector<fs::path> next;
        for (const auto& base : frontier) {
            if (part.find('*') == std::string::npos) {
                auto candidate = base / part;
                if (fs::exists(candidate)) next.push_back(candidate);
                continue;
            }
            if (!fs::is_directory(base)) continue;
            std::vector<fs::path> matches;
            for (const auto& entry : fs::directory_iterator(base))
                if (wild_match(part, entry.path().filename().string())) matches.push_back(entry.path());
            std::sort(matches.begin(), matches.end());
            next.insert(next.end(), matches.begin(), matches.end());
        }
        frontier = std::move(next);
    }
    std::vector<std::string> out;
    for (const auto& p : frontier)
        if (fs::is_directory(p)) out.push_back(p.string());
    return out;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"deep-RL testbed: double DQN with contrastive predictive auxiliary objectives"};
    app.require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "run one experiment from a config file");
    std::string train_config, train_out;
    int64_t train_seed = -1;
    train->add_option("--config", train_config, "run config JSON")->required();
    train->add_option("--seed", train_seed, "override the config seed");
    train->add_option("--out", train_out, "output run directory");

    // sweep
    auto* sw = app.add_subcommand("sweep", "run a config template across an axis");
    std::string sweep_config, sweep_axis, sweep_values, sweep_out;
    sw->add_option("--config", sweep_config, "template config JSON")->required();
    sw->add_option("--axis", sweep_axis, "seed|latent|gamma|epsilon|p|weights")->required();
    sw->add_option("--values", sweep_values, "comma-separated axis values")->required();
    sw->add_option("--out", sweep_out, "output root directory");

    // dump
    auto* dp = app.add_subcommand("dump", "recompute an activation dump from a checkpoint");
    std::string dump_run, dump_probe;
    int dump_step = 0;
    dp->add_option("--run", dump_run, "run directory")->required();
    dp->add_option("--probe", dump_probe, "probe tag")->required();
    dp->add_option("--step", dump_step, "checkpoint step")->required();

    // analyze
    auto* an = app.add_subcommand("analyze", "emit figure-analog CSV tables from runs");
    std::string an_run, an_runs, an_name, an_out;
    bool an_svg = false;
    an->add_option("--run", an_run, "single run directory");
    an->add_option("--runs", an_runs, "glob over run directories ('*' wildcards)");
    an->add_option("--name", an_name, "figure tag, e.g. fig2f")->required();
    an->add_option("--out", an_out, "output directory for tables (default: first run)");
    an->add_flag("--svg", an_svg, "also emit quick-look SVG plots");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*train) {
            RunConfig cfg = RunConfig::from_json_file(train_config);
            if (train_seed >= 0) cfg.seed = static_cast<uint64_t>(train_seed);
            if (!train_out.empty()) cfg.out_dir = train_out;
            if (cfg.out_dir.empty()) {
                const auto stem = fs::path(train_config).stem().string();
                cfg.out_dir = default_out_root() + "/" + stem + "_seed" + std::to_string(cfg.seed);
            }
            auto result = run_experiment(cfg);
            std::cout << "run " << result.dir << " status=" << result.status
                      << " final_score=" << result.final_score << "\n";
            return 0;
        }
        if (*sw) {
            RunConfig cfg = RunConfig::from_json_file(sweep_config);
            std::vector<std::string> values;
            std::string cur;
            for (char c : sweep_values) {
                if (c == ',') {
                    if (!cur.empty()) values.push_back(cur);
                    cur.clear();
                } else {
                    cur += c;
                }
            }
            if (!cur.empty()) values.push_back(cur);
            const std::string out_root =
                sweep_out.empty() ? default_out_root() + "/sweep_" + sweep_axis : sweep_out;
            auto result = sweep(cfg, sweep_axis, values, out_root);
            std::cout << "sweep " << out_root << ": " << result.run_dirs.size() << " runs\n";
            for (const auto& s : result.summary)
                std::cout << "  " << sweep_axis << "=" << s.value << " mean=" << s.mean_final_score
                          << " sem=" << s.sem_final_score << " n=" << s.n
                          << (s.failures ? " failures=" + std::to_string(s.failures) : "") << "\n";
            return 0;
        }
        if (*dp) {
            const auto path = dump_activations(dump_run, dump_probe, dump_step);
            std::cout << path << "\n";
            return 0;
        }
        if (*an) {
            std::vector<std::string> dirs;
            if (!an_run.empty()) dirs.push_back(an_run);
            if (!an_runs.empty()) {
                auto more = expand_runs_glob(an_runs);
                dirs.insert(dirs.end(), more.begin(), more.end());
            }
            if (dirs.empty()) throw ConfigError("analyze: pass --run DIR or --runs GLOB");
            const std::string out = an_out.empty() ? dirs.front() : an_out;
            const auto files = analyze(dirs, an_name, out, an_svg);
            for (const auto& f : files) std::cout << f << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace pxrl
