#include "raresim.h"

#include <cstring>
#include <map>
#include <string>

#include "raresim/config.hpp"
#include "raresim/errors.hpp"
#include "raresim/estimators.hpp"
#include "raresim/experiments.hpp"
#include "raresim/model.hpp"
#include "raresim/version.hpp"

namespace {

thread_local std::string g_last_error;

rs_status to_status(const std::exception& e) {
    g_last_error = e.what();
    if (dynamic_cast<const raresim::ConfigError*>(&e)) return RS_ERR_CONFIG;
    if (dynamic_cast<const raresim::NumericalError*>(&e)) return RS_ERR_NUMERICAL;
    if (dynamic_cast<const raresim::IoError*>(&e)) return RS_ERR_IO;
    if (dynamic_cast<const raresim::LookupError*>(&e)) return RS_ERR_NOT_FOUND;
    return RS_ERR_INTERNAL;
}

template <typename F>
rs_status guarded(F&& f) {
    try {
        f();
        g_last_error.clear();
        return RS_OK;
    } catch (const std::exception& e) {
        return to_status(e);
    } catch (...) {
        g_last_error = "unknown error";
        return RS_ERR_INTERNAL;
    }
}

rs_status argument_error(const char* message) {
    g_last_error = message;
    return RS_ERR_ARGUMENT;
}

} // namespace

struct rs_config {
    raresim::ExperimentConfig config;
};

struct rs_model {
    std::string preset;
    std::map<std::string, double> overrides;
};

extern "C" {

const char* rs_version(void) { return raresim::kVersion; }

const char* rs_status_name(rs_status status) {
    switch (status) {
        case RS_OK: return "ok";
        case RS_ERR_ARGUMENT: return "argument";
        case RS_ERR_CONFIG: return "config";
        case RS_ERR_NUMERICAL: return "numerical";
        case RS_ERR_IO: return "io";
        case RS_ERR_NOT_FOUND: return "not_found";
        case RS_ERR_INTERNAL: return "internal";
    }
    return "unknown";
}

const char* rs_last_error(void) { return g_last_error.c_str(); }

rs_status rs_config_load(const char* path, rs_config** out) {
    if (!path || !out) return argument_error("rs_config_load: null argument");
    *out = nullptr;
    return guarded([&] {
        auto* handle = new rs_config{raresim::ExperimentConfig::from_file(path)};
        *out = handle;
    });
}

rs_status rs_config_parse(const char* text, rs_config** out) {
    if (!text || !out) return argument_error("rs_config_parse: null argument");
    *out = nullptr;
    return guarded([&] {
        auto* handle = new rs_config{raresim::ExperimentConfig::from_string(text, "<inline>")};
        *out = handle;
    });
}

void rs_config_free(rs_config* config) { delete config; }

const char* rs_config_kind(const rs_config* config) {
    return config ? config->config.kind.c_str() : "";
}

rs_status rs_config_set_kind(rs_config* config, const char* kind) {
    if (!config || !kind) return argument_error("rs_config_set_kind: null argument");
    config->config.kind = kind;
    return RS_OK;
}

rs_status rs_config_set_seed(rs_config* config, uint64_t master_seed) {
    if (!config) return argument_error("rs_config_set_seed: null config");
    config->config.master_seed = master_seed;
    return RS_OK;
}

rs_status rs_config_set_out_dir(rs_config* config, const char* out_dir) {
    if (!config || !out_dir) return argument_error("rs_config_set_out_dir: null argument");
    config->config.out_dir = out_dir;
    return RS_OK;
}

rs_status rs_config_set_workers(rs_config* config, int workers) {
    if (!config) return argument_error("rs_config_set_workers: null config");
    if (workers < 0) return argument_error("rs_config_set_workers: workers must be >= 0");
    config->config.workers = workers;
    return RS_OK;
}

rs_status rs_config_set_dump_paths(rs_config* config, int enable) {
    if (!config) return argument_error("rs_config_set_dump_paths: null config");
    config->config.dump_paths = enable != 0;
    return RS_OK;
}

rs_status rs_run(const rs_config* config) {
    if (!config) return argument_error("rs_run: null config");
    return guarded([&] { raresim::run_experiment(config->config); });
}

rs_status rs_model_open(const char* preset, rs_model** out) {
    if (!preset || !out) return argument_error("rs_model_open: null argument");
    *out = nullptr;
    return guarded([&] {
        raresim::make_builtin_model(preset); // validates the name eagerly
        *out = new rs_model{preset, {}};
    });
}

void rs_model_close(rs_model* model) { delete model; }

rs_status rs_model_set_param(rs_model* model, const char* key, double value) {
    if (!model || !key) return argument_error("rs_model_set_param: null argument");
    return guarded([&] {
        model->overrides[key] = value;
        raresim::make_builtin_model(model->preset, model->overrides); // validate eagerly
    });
}

int rs_model_dim(rs_model* model) {
    if (!model) return -1;
    try {
        return raresim::make_builtin_model(model->preset, model->overrides).system.dim();
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return -1;
    }
}

rs_status rs_plain_mc(rs_model* model, double eps, int64_t n_samples, double dt,
                      uint64_t master_seed, rs_estimate* out) {
    if (!model || !out) return argument_error("rs_plain_mc: null argument");
    return guarded([&] {
        const raresim::ModelInstance instance =
            raresim::make_builtin_model(model->preset, model->overrides);
        raresim::EstimatorOptions options;
        options.dt = dt;
        options.workers = 1;
        const raresim::EstimateReport report =
            raresim::plain_mc(instance.system, instance.domain, instance.terminal, instance.start,
                              eps, n_samples, master_seed, options);
        *out = rs_estimate{report.eps,      report.n_samples, report.mean,
                           report.second_moment, report.variance,  report.rel_err,
                           report.delta,    report.ci_lo,     report.ci_hi,
                           report.degenerate ? 1 : 0};
    });
}

} // extern "C"
