#include "cavspec/lab.hpp"
#include "cavspec/parallel.hpp"
#include "cavspec/version.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

int resolve_threads(int flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("CAVITY_SPECTRA_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 0; // hardware default
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw cavspec::lab::ConfigError(std::vector<cavspec::lab::ConfigIssue>{
            {"", "cannot open config file '" + path + "'"}});
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"cavity-spectra: Maxwell cavity eigenvalue laboratory"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    int threads = 0;
    bool quiet = false;

    auto* run_cmd = app.add_subcommand("run", "run an experiment from a config file");
    run_cmd->add_option("config-file", config_path, "experiment config (JSON)");
    run_cmd->add_option("--config", config_path, "experiment config (JSON)")->excludes("config-file");
    run_cmd->add_option("--out", out_dir, "output directory");
    run_cmd->add_option("--threads", threads, "worker threads for assembly");
    run_cmd->add_flag("--quiet", quiet, "suppress progress output");

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate-config", "check a config file against the schema");
    validate_cmd->add_option("config", validate_path, "experiment config (JSON)")->required();

    auto* presets_cmd = app.add_subcommand("presets", "list built-in domain and permittivity presets");
    auto* version_cmd = app.add_subcommand("version", "print the tool version");

    CLI11_PARSE(app, argc, argv);

    try {
        if (version_cmd->parsed()) {
            std::cout << "cavity-spectra " << CAVSPEC_VERSION << "\n";
            return 0;
        }
        if (presets_cmd->parsed()) {
            std::cout << "domain presets:\n";
            for (const auto& p : cavspec::lab::domain_presets())
                std::cout << "  " << p.name << "  -  " << p.description << "\n";
            std::cout << "permittivity presets:\n";
            for (const auto& p : cavspec::lab::permittivity_presets())
                std::cout << "  " << p.name << "  -  " << p.description << "\n";
            return 0;
        }
        if (validate_cmd->parsed()) {
            const auto issues = cavspec::lab::validate_config(read_file(validate_path));
            if (issues.empty()) {
                std::cout << "ok\n";
                return 0;
            }
            for (const auto& issue : issues)
                std::cerr << issue.pointer << ": " << issue.message << "\n";
            return 1;
        }
        if (run_cmd->parsed()) {
            if (config_path.empty())
                throw cavspec::lab::ConfigError(
                    std::vector<cavspec::lab::ConfigIssue>{{"", "missing config file argument"}});
            cavspec::set_thread_count(resolve_threads(threads));
            const auto cfg = cavspec::lab::parse_config(read_file(config_path));
            if (!quiet)
                std::cout << "running " << cavspec::lab::kind_name(cfg.kind) << " -> " << out_dir
                          << "\n";
            const auto report = cavspec::lab::run(cfg);
            cavspec::lab::write_report(report, out_dir);
            if (!quiet) {
                std::cout << "wrote report.json";
                for (const auto& [name, content] : report.files) {
                    (void)content;
                    std::cout << ", " << name;
                }
                std::cout << "\n";
            }
            return 0;
        }
    } catch (const cavspec::lab::ConfigError& e) {
        for (const auto& issue : e.issues)
            std::cerr << (issue.pointer.empty() ? "config" : issue.pointer) << ": " << issue.message
                      << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
