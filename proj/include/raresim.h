/* raresim — rare-event simulation engine for chain-structured diffusions.
 *
 * C interface to the shared library: opaque handles plus status codes.
 * Every function that can fail returns an rs_status; rs_last_error() gives a
 * human-readable message for the most recent failure on the calling thread.
 */
#ifndef RARESIM_H
#define RARESIM_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum rs_status {
    RS_OK = 0,
    RS_ERR_ARGUMENT = 1,  /* bad pointer / malformed argument */
    RS_ERR_CONFIG = 2,    /* invalid or inconsistent configuration */
    RS_ERR_NUMERICAL = 3, /* solver or simulation failure */
    RS_ERR_IO = 4,        /* file read/write failure */
    RS_ERR_NOT_FOUND = 5, /* unknown preset or missing key */
    RS_ERR_INTERNAL = 6
} rs_status;

const char* rs_version(void);
const char* rs_status_name(rs_status status);
/* Message for the last failure on this thread; empty string if none. */
const char* rs_last_error(void);

/* --- experiment configs ------------------------------------------------- */

typedef struct rs_config rs_config;

rs_status rs_config_load(const char* path, rs_config** out);
rs_status rs_config_parse(const char* text, rs_config** out);
void rs_config_free(rs_config* config);

/* Kind declared by the config file; empty string when unset. */
const char* rs_config_kind(const rs_config* config);
rs_status rs_config_set_kind(rs_config* config, const char* kind);
rs_status rs_config_set_seed(rs_config* config, uint64_t master_seed);
rs_status rs_config_set_out_dir(rs_config* config, const char* out_dir);
rs_status rs_config_set_workers(rs_config* config, int workers);
rs_status rs_config_set_dump_paths(rs_config* config, int enable);

/* Runs the campaign described by the config; artifacts land in its out_dir. */
rs_status rs_run(const rs_config* config);

/* --- direct model access -------------------------------------------------- */

typedef struct rs_model rs_model;

rs_status rs_model_open(const char* preset, rs_model** out);
void rs_model_close(rs_model* model);
/* Preset parameter override (half_width, t_start, t_end, start_1, ...);
 * applies to subsequent estimator calls on this handle. */
rs_status rs_model_set_param(rs_model* model, const char* key, double value);
/* State dimension n*d, or -1 on error. */
int rs_model_dim(rs_model* model);

typedef struct rs_estimate {
    double eps;
    int64_t n_samples;
    double mean;
    double second_moment;
    double variance;
    double rel_err;
    double delta;
    double ci_lo;
    double ci_hi;
    int degenerate;
} rs_estimate;

/* Plain Monte Carlo exit-probability estimate for the model's terminal data. */
rs_status rs_plain_mc(rs_model* model, double eps, int64_t n_samples, double dt,
                      uint64_t master_seed, rs_estimate* out);

#ifdef __cplusplus
}
#endif

#endif /* RARESIM_H */
