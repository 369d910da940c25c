#ifndef IONTRAP_IONTRAP_H
#define IONTRAP_IONTRAP_H

/* C interface of the ion-trap transport toolkit. All objects are opaque
 * handles released with the matching *_free function. Every call returns an
 * it_status; on failure it_last_error() holds a message for the calling
 * thread. Units are SI throughout. */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define IT_API __declspec(dllexport)
#else
#define IT_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum it_status {
  IT_OK = 0,
  IT_INVALID_ARGUMENT,
  IT_PARSE_ERROR,
  IT_SCHEMA_ERROR,
  IT_UNIT_ERROR,
  IT_IO_ERROR,
  IT_NO_WELL_FOUND,
  IT_INFEASIBLE,
  IT_SLEW_VIOLATION,
  IT_ANTI_TRAPPING,
  IT_RANK_DEFICIENT,
  IT_NO_CONVERGENCE,
  IT_DIVERGED,
  IT_ION_LOST,
  IT_UNKNOWN_ELECTRODE,
  IT_DEGENERATE_DATA,
  IT_NO_PEAK,
  IT_TRUNCATION_TOO_SMALL,
  IT_DEGENERATE_VARIANCE,
  IT_INTERNAL_ERROR
} it_status;

IT_API const char* it_last_error(void);
IT_API const char* it_status_name(it_status status);
/* Nonzero for failures caused by invalid input rather than by the computation. */
IT_API int it_status_is_validation(it_status status);
IT_API const char* it_version(void);

/* ---- configuration ---- */
typedef struct it_config it_config;

IT_API it_status it_config_load(const char* path, it_config** out);
IT_API void it_config_free(it_config* config);
/* 16 hex digits plus terminator. */
IT_API it_status it_config_hash(const it_config* config, char out[17]);
IT_API it_status it_config_seed(const it_config* config, uint64_t* out);
IT_API it_status it_config_axial_frequency(const it_config* config, double* out);
IT_API it_status it_config_probe_duration(const it_config* config, double* out);
IT_API it_status it_config_zone_position(const it_config* config, const char* zone, double* out);

/* ---- waveforms ---- */
typedef struct it_waveform it_waveform;

/* Sigmoid transport between two zone markers at constant axial frequency.
 * frequency <= 0 selects the configured default; steepness <= 0 selects 6. model_windows_json, when
 * not NULL, is a JSON object of window voltages included in the model.
 * The audit outputs may be NULL. */
IT_API it_status it_synthesize_transport(const it_config* config, const char* from_zone, const char* to_zone,
                                         double duration, double frequency, double steepness,
                                         const char* model_windows_json,
                                         unsigned threads, it_waveform** out, double* max_position_error,
                                         double* max_frequency_error);
IT_API it_status it_waveform_precompensate(const it_config* config, const it_waveform* waveform, it_waveform** out);
/* CSV or binary container, detected from the content. */
IT_API it_status it_waveform_load(const it_config* config, const char* path, it_waveform** out);
IT_API it_status it_waveform_save(const it_waveform* waveform, const char* path, int binary);
IT_API size_t it_waveform_samples(const it_waveform* waveform);
IT_API size_t it_waveform_electrodes(const it_waveform* waveform);
IT_API double it_waveform_period(const it_waveform* waveform);
IT_API it_status it_waveform_value(const it_waveform* waveform, size_t sample, size_t electrode, double* out);
IT_API void it_waveform_free(it_waveform* waveform);

/* ---- motion ---- */
typedef struct it_sim_options {
  int apply_filter;         /* run the drive through the configured filter cascade */
  double hold_time;         /* s held after the last sample */
  double dt;                /* s, <= 0 selects the configured step */
  size_t output_stride;     /* 0 selects the configured stride */
  const char* start_zone;   /* ion starts at rest in the well nearest this zone; NULL = first zone */
  const char* truth_windows_json; /* window voltages present in the simulated trap, may be NULL */
} it_sim_options;

IT_API void it_sim_options_default(it_sim_options* options);

typedef struct it_trajectory it_trajectory;

IT_API it_status it_simulate(const it_config* config, const it_waveform* waveform, const it_sim_options* options,
                             it_trajectory** out);
IT_API size_t it_trajectory_size(const it_trajectory* trajectory);
/* NaN when the hold was too short to evaluate the final well. */
IT_API double it_trajectory_final_nbar(const it_trajectory* trajectory);
IT_API it_status it_trajectory_sample(const it_trajectory* trajectory, size_t index, double* t, double* x, double* v,
                                      double* energy);
IT_API it_status it_trajectory_save(const it_trajectory* trajectory, const char* path);
IT_API void it_trajectory_free(it_trajectory* trajectory);

typedef struct it_doppler_map it_doppler_map;

typedef struct it_doppler_options {
  double probe_duration;   /* s, <= 0 selects the configured probe */
  double delay_start, delay_stop, delay_step;  /* s */
  double detuning_min, detuning_max;           /* rad/s */
  size_t detuning_points;
  unsigned threads;
} it_doppler_options;

IT_API it_status it_doppler(const it_config* config, const it_waveform* waveform, const it_sim_options* sim,
                            const it_doppler_options* options, it_doppler_map** out);
IT_API size_t it_doppler_delays(const it_doppler_map* map);
/* Writes one ridge detuning per delay into out (capacity n). */
IT_API it_status it_doppler_ridge(const it_doppler_map* map, double* out, size_t n);
IT_API it_status it_doppler_save(const it_doppler_map* map, const char* header_path, const char* matrix_path);
IT_API void it_doppler_free(it_doppler_map* map);

/* ---- calibration ---- */
typedef struct it_calibration it_calibration;

/* Closed-loop demo against hidden window voltages. zones is a comma
 * separated list (NULL = every zone); noise_fraction < 0 and seed == 0
 * select the configured defaults. */
IT_API it_status it_calibrate(const it_config* config, const char* true_windows_json, const char* zones, int rounds,
                              double noise_fraction, uint64_t seed, it_calibration** out);
IT_API int it_calibration_rounds(const it_calibration* calibration);
IT_API it_status it_calibration_residual(const it_calibration* calibration, int round, double* out);
/* JSON object of the estimate after `round` (1-based); owned by the handle. */
IT_API const char* it_calibration_estimate(const it_calibration* calibration, int round);
IT_API it_status it_calibration_save(const it_calibration* calibration, const char* table_path,
                                     const char* estimate_path);
IT_API void it_calibration_free(it_calibration* calibration);

/* Fits window voltages to a profile CSV. windows is comma separated; ties is
 * a JSON array of name arrays or NULL for the configured ties. The result is
 * a JSON document owned by the returned text handle. */
typedef struct it_text it_text;
IT_API it_status it_fit_profile(const it_config* config, const char* profile_path, const char* windows,
                                const char* ties_json, it_text** out);
IT_API const char* it_text_get(const it_text* text);
IT_API void it_text_free(it_text* text);

/* ---- qubit protocols ---- */
enum { IT_RAMSEY_OPTICAL = 0, IT_RAMSEY_HYBRID = 1 };
enum { IT_PHASE_FIXED = 0, IT_PHASE_PER_SHOT = 1, IT_PHASE_PER_POINT = 2 };

IT_API it_status it_ramsey(int mode, int phase_model, const double* phases, size_t n, size_t shots, uint64_t seed,
                           unsigned threads, double* p_down, double* sigma);
IT_API it_status it_ramsey_save(const char* path, const double* phases, const double* p_down, const double* sigma,
                                size_t n);
IT_API it_status it_fit_sinusoid(const double* phases, const double* values, size_t n, double* contrast,
                                 double* contrast_sigma, double* phase);
IT_API it_status it_pi_infidelity(double epsilon, int composite, double* out);
IT_API it_status it_thermal_carrier(double rabi, double eta, double nbar, double t, double* out);

/* ---- analysis ---- */
typedef struct it_table it_table;

/* Numeric CSV with a header row. */
IT_API it_status it_table_load(const char* path, it_table** out);
IT_API size_t it_table_rows(const it_table* table);
IT_API it_status it_table_column(const it_table* table, const char* name, double* out, size_t n);
IT_API void it_table_free(it_table* table);

IT_API it_status it_fit_nbar(const double* times, const double* populations, size_t n, double eta, double rabi_guess,
                             const double* sigma, double* nbar, double* nbar_sigma, double* rabi, double* rabi_sigma);
IT_API it_status it_lorentzian_fit(const double* detunings, const double* populations, size_t n, const double* sigma,
                                   double* center, double* center_sigma, double* fwhm, double* fwhm_sigma);
IT_API it_status it_crosstalk_ratio(double target, double target_sigma, double spectator, double spectator_sigma,
                                    double* ratio, double* sigma);
IT_API it_status it_correlation(const char* spectroscopy_path, const char* zone_a, const char* zone_b, double window,
                                double* r, size_t* pairs, size_t* dropped);

/* ---- run bookkeeping ---- */
/* Applies IONTRAP_OUTPUT_DIR to relative paths. */
IT_API it_status it_resolve_output(const char* path, char* buffer, size_t capacity);
/* Atomic write through a temporary file and rename. */
IT_API it_status it_write_file(const char* path, const char* data, size_t size);
/* 20-character UTC timestamp plus terminator; honours SOURCE_DATE_EPOCH. */
IT_API it_status it_timestamp(char out[32]);
/* Output paths are recorded relative to the manifest's directory. */
IT_API it_status it_write_manifest(const char* path, const char* command, const char* const* arguments,
                                   size_t n_arguments, const char* config_hash, uint64_t seed, const char* started,
                                   const char* const* outputs, size_t n_outputs);

#ifdef __cplusplus
}
#endif

#endif
