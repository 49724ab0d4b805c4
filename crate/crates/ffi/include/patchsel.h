#ifndef PATCHSEL_H
#define PATCHSEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_SHAPE = 3,
  PS_STATUS_PARSE = 4,
  PS_STATUS_IO = 5,
  PS_STATUS_NON_FINITE = 6,
  PS_STATUS_INTERNAL = 7,
  PS_STATUS_PANIC = 8,
} PsStatus;

/*
 A loaded restoration model. Create with [`ps_restorer_open`] or
 [`ps_restorer_bilinear`], release with [`ps_restorer_free`].
 */
typedef struct PsRestorer PsRestorer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failure on this thread, or NULL. The pointer stays
 valid until the next failing call on the same thread.
 */
const char *ps_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *ps_version(void);

/*
 PSNR in dB between two buffers of `len` samples, clamped to [0, 1],
 with a peak of 1. Identical inputs give the 100 dB cap.

 # Safety
 `a` and `b` must each point to `len` readable doubles and `out` to one
 writable double.
 */
enum PsStatus ps_psnr(const double *a, const double *b, uintptr_t len, double *out);

/*
 Samples an RGB image through the colour filter array named by
 `pattern` (`"rggb"`, `"bggr"`, `"grbg"` or `"gbrg"`).

 # Safety
 `rgb` must point to `3 * height * width` doubles, `raw_out` to
 `height * width` writable doubles and `pattern` to a NUL-terminated
 string.
 */
enum PsStatus ps_mosaic(const double *rgb,
                        uintptr_t height,
                        uintptr_t width,
                        const char *pattern,
                        double *raw_out);

/*
 Bilinear demosaic of a raw mosaic into planar RGB.

 # Safety
 `raw` must point to `height * width` doubles, `rgb_out` to
 `3 * height * width` writable doubles and `pattern` to a NUL-terminated
 string.
 */
enum PsStatus ps_bilinear(const double *raw,
                          uintptr_t height,
                          uintptr_t width,
                          const char *pattern,
                          double *rgb_out);

/*
 Loads the restoration network from a training checkpoint. Any
 PatchNet weights in the file are ignored.

 # Safety
 `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum PsStatus ps_restorer_open(const char *path, struct PsRestorer **out);

/*
 A restorer that runs the bilinear baseline.

 # Safety
 `out` must be a writable pointer.
 */
enum PsStatus ps_restorer_bilinear(struct PsRestorer **out);

/*
 Restores a noisy raw mosaic. `sigma_8bit` is the noise level on the
 8-bit scale; height and width must be even.

 # Safety
 `handle` must come from `ps_restorer_open` or `ps_restorer_bilinear`
 and not be freed; buffers as for [`ps_bilinear`].
 */
enum PsStatus ps_restorer_run(const struct PsRestorer *handle,
                              const double *raw,
                              uintptr_t height,
                              uintptr_t width,
                              double sigma_8bit,
                              const char *pattern,
                              double *rgb_out);

/*
 Releases a restorer. NULL is accepted.

 # Safety
 `handle` must be NULL or a live pointer from this library.
 */
void ps_restorer_free(struct PsRestorer *handle);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PATCHSEL_H */
