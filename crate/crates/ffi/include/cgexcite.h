#ifndef CGEXCITE_H
#define CGEXCITE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum CgxStatus {
  CGX_OK = 0,
  CGX_NULL_POINTER = 1,
  CGX_DOMAIN = 2,
  CGX_CONFIG = 3,
  CGX_SHAPE = 4,
  CGX_EMPTY_INPUT = 5,
  CGX_DEGENERATE = 6,
  CGX_NUMERIC = 7,
  CGX_BUFFER_TOO_SMALL = 8,
  CGX_IO = 9,
  CGX_FORMAT = 10,
  CGX_PANIC = 11,
} CgxStatus;

// Opaque conditional gated LSTM cell.
typedef struct CgxCglstm CgxCglstm;

// Opaque mel excitation spectrogram.
typedef struct CgxExcitation CgxExcitation;

// Opaque mel filterbank.
typedef struct CgxFilterbank CgxFilterbank;

// Framing parameters, mirroring the library defaults.
typedef struct CgxFrameParams {
  uint32_t sample_rate;
  size_t hop;
  size_t window;
  size_t n_fft;
  size_t n_mels;
  double fmin;
  double fmax;
} CgxFrameParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length excluding the NUL,
// or 0 when no error was recorded.
//
// # Safety
// `buf` must be valid for `len` bytes or null.
size_t cgx_last_error(char *buf, size_t len);

// 16 kHz, hop 200, window 800, 1024-point FFT, 80 mels over 0..8000 Hz.
struct CgxFrameParams cgx_frame_params_default(void);

// # Safety
// `params` must point to a valid struct and `out` to writable storage.
enum CgxStatus cgx_filterbank_new(const struct CgxFrameParams *params, struct CgxFilterbank **out);

// # Safety
// `fb` must come from [`cgx_filterbank_new`] and not be used afterwards.
void cgx_filterbank_free(struct CgxFilterbank *fb);

// Writes the matrix shape, `n_bins` rows by `n_mels` columns.
//
// # Safety
// All pointers must be valid.
enum CgxStatus cgx_filterbank_shape(const struct CgxFilterbank *fb, size_t *n_bins, size_t *n_mels);

// Copies the row-major `n_bins x n_mels` weights into `out`.
//
// # Safety
// `out` must be valid for `len` writes.
enum CgxStatus cgx_filterbank_weights(const struct CgxFilterbank *fb, double *out, size_t len);

// Builds the mel excitation of `n_frames` pitch (Hz, 0 = unvoiced) and
// energy values. `literal_divisor` divides unvoiced energy by `n_fft`
// instead of the bin count.
//
// # Safety
// `f0` and `energy` must be valid for `n_frames` reads; `out` writable.
enum CgxStatus cgx_excitation_new(const struct CgxFilterbank *fb,
                                  const double *f0,
                                  const double *energy,
                                  size_t n_frames,
                                  bool literal_divisor,
                                  struct CgxExcitation **out);

// # Safety
// `exc` must come from [`cgx_excitation_new`] and not be used afterwards.
void cgx_excitation_free(struct CgxExcitation *exc);

// # Safety
// All pointers must be valid.
enum CgxStatus cgx_excitation_shape(const struct CgxExcitation *exc,
                                    size_t *n_frames,
                                    size_t *n_mels);

// Copies the row-major `n_frames x n_mels` values into `out`.
//
// # Safety
// `out` must be valid for `len` writes.
enum CgxStatus cgx_excitation_data(const struct CgxExcitation *exc, double *out, size_t len);

// Creates a cell with seeded content weights and control projections at
// the LSTM reduction point (`W = 0`, `b = 1`). `product_gates` selects the
// `σ(a)·σ(m)` gate composition instead of `σ(a·m)`.
//
// # Safety
// `out` must be writable.
enum CgxStatus cgx_cglstm_new(size_t hidden,
                              size_t input,
                              size_t control,
                              uint64_t seed,
                              bool product_gates,
                              struct CgxCglstm **out);

// # Safety
// `cell` must come from [`cgx_cglstm_new`] and not be used afterwards.
void cgx_cglstm_free(struct CgxCglstm *cell);

// Writes the hidden, input and control sizes and the parameter count.
//
// # Safety
// All pointers must be valid.
enum CgxStatus cgx_cglstm_dims(const struct CgxCglstm *cell,
                               size_t *hidden,
                               size_t *input,
                               size_t *control,
                               size_t *param_count);

// Overwrites one control projection (`gate` 0 = forget, 1 = input,
// 2 = output) with a row-major `hidden x control` weight matrix and a
// `hidden` bias.
//
// # Safety
// `w` and `b` must be valid for the stated lengths.
enum CgxStatus cgx_cglstm_set_control(struct CgxCglstm *cell,
                                      uint32_t gate,
                                      const double *w,
                                      size_t w_len,
                                      const double *b,
                                      size_t b_len);

// One step. `h` and `c` hold the state on entry and receive the new state.
//
// # Safety
// `h` and `c` must be valid for `hidden` values, `x` for `input`,
// `control` for the control size.
enum CgxStatus cgx_cglstm_step(const struct CgxCglstm *cell,
                               double *h,
                               double *c,
                               const double *x,
                               const double *control);

// Library version as a static NUL-terminated string.
const char *cgx_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGEXCITE_H */
