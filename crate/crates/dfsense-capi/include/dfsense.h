/* C interface to the dfsense motion-detection pipeline.
 *
 * Profiles are opaque handles owned by the library; traces, decision
 * logs, and label files travel as JSONL paths. Every function returns
 * DFS_OK or an error code, and dfs_last_error() gives the message
 * behind the most recent failure on the calling thread.
 *
 * Kept by hand in lockstep with src/lib.rs; struct layouts must match
 * field for field.
 */

#ifndef DFSENSE_H
#define DFSENSE_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
    DFS_OK = 0,
    /* A required pointer was null. */
    DFS_ERR_NULL_ARG = 1,
    /* A parameter, path encoding, or configuration value was rejected. */
    DFS_ERR_INVALID = 2,
    /* The underlying file operation failed. */
    DFS_ERR_IO = 3,
    /* Input parsed but was malformed, inconsistent, or too short. */
    DFS_ERR_DATA = 4,
    /* Internal failure; the library state is still consistent. */
    DFS_ERR_PANIC = 5
};

enum {
    DFS_FEATURE_VARIANCE = 0,
    DFS_FEATURE_STDDEV = 1,
    DFS_FEATURE_MEAN = 2
};

/* Opaque collection of per-stream silence profiles. */
typedef struct DfsProfiles DfsProfiles;

/* Detector parameters. `feature` takes the DFS_FEATURE_* codes;
 * `update_enabled` is 0 or 1. Fill with dfs_detector_params_default()
 * and override selectively. */
typedef struct DfsDetectorParams {
    size_t l;                 /* sliding-window length, ticks */
    double alpha;             /* significance of the critical bound */
    size_t l_update;          /* online-update group size */
    int update_enabled;
    double beta;              /* smoothing coefficient of the refinement filter */
    double rel_threshold;     /* relative rise over the normal level that alarms */
    int feature;
    double rate_hz;
    size_t warmup_ticks;      /* silence ticks that initialize the normal level */
    double level_coeff;       /* coefficient of the level's slow running mean */
    size_t onset_window_ticks;
    double monitor_start_t;   /* earlier ticks only provide window history */
} DfsDetectorParams;

typedef struct DfsRunStats {
    uint64_t decisions;
    uint64_t basic_alarms;
    uint64_t refined_alarms;
} DfsRunStats;

/* latency_p90_s is NaN when no motion interval was detected. */
typedef struct DfsEvalSummary {
    double precision;
    double recall;
    double f_measure;
    double fp_rate;
    double fn_rate;
    double latency_p90_s;
    uint64_t true_pos;
    uint64_t false_pos;
    uint64_t true_neg;
    uint64_t false_neg;
} DfsEvalSummary;

/* Message behind the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread. */
const char *dfs_last_error(void);

/* Fills `out` with the engine defaults. */
int dfs_detector_params_default(DfsDetectorParams *out);

/* Trains one profile per stream from the trace slice
 * [train_start, train_end) and stores an owned handle in `*out`.
 * Free with dfs_profiles_free(). */
int dfs_profiles_train(const char *trace_path,
                       double train_start,
                       double train_end,
                       size_t l,
                       double alpha,
                       int feature,
                       DfsProfiles **out);

/* Loads a profile bundle written by dfs_profiles_save() or the CLI. */
int dfs_profiles_load(const char *path, DfsProfiles **out);

int dfs_profiles_save(const DfsProfiles *profiles, const char *path);

/* Number of streams covered; 0 for null. */
size_t dfs_profiles_count(const DfsProfiles *profiles);

/* Anomaly score of one feature value under a stream's profile; a score
 * of 1 or more means anomalous. */
int dfs_profiles_score(const DfsProfiles *profiles,
                       const char *stream,
                       double value,
                       double *out_score);

/* Frees an owned handle; null is a no-op. */
void dfs_profiles_free(DfsProfiles *profiles);

/* Runs the full pipeline over a trace file. `decisions_out` and
 * `verdicts_out` receive JSONL when non-null; `updated_out`, when
 * non-null, receives a new handle holding the post-update profiles;
 * `stats`, when non-null, receives row and alarm counts. */
int dfs_run_trace(const char *trace_path,
                  const DfsProfiles *profiles,
                  const DfsDetectorParams *params,
                  const char *decisions_out,
                  const char *verdicts_out,
                  DfsProfiles **updated_out,
                  DfsRunStats *stats);

/* Scores a decision log against a label file. `refined_channel` picks
 * the refined (1) or basic (0) alarm stream. */
int dfs_eval_decisions(const char *decisions_path,
                       const char *labels_path,
                       int refined_channel,
                       DfsEvalSummary *out);

#ifdef __cplusplus
}
#endif

#endif /* DFSENSE_H */
