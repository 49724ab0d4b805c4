/* Mosaics a smooth ramp, demosaics it and prints the PSNR. */
#include <stdio.h>
#include <stdlib.h>

#include "patchsel.h"

int main(void) {
    enum { H = 16, W = 16 };
    double rgb[3 * H * W], raw[H * W], rec[3 * H * W];
    for (int c = 0; c < 3; c++)
        for (int i = 0; i < H * W; i++)
            rgb[c * H * W + i] = 0.2 + 0.1 * c + 0.001 * i;

    PsRestorer *r = NULL;
    double db = 0.0;
    if (ps_mosaic(rgb, H, W, "rggb", raw) != PS_STATUS_OK ||
        ps_restorer_bilinear(&r) != PS_STATUS_OK ||
        ps_restorer_run(r, raw, H, W, 0.0, "rggb", rec) != PS_STATUS_OK ||
        ps_psnr(rec, rgb, 3 * H * W, &db) != PS_STATUS_OK) {
        fprintf(stderr, "error: %s\n", ps_last_error());
        ps_restorer_free(r);
        return 1;
    }
    ps_restorer_free(r);

    if (ps_mosaic(rgb, H, W, "rgbx", raw) != PS_STATUS_INVALID_ARGUMENT) {
        fprintf(stderr, "bad pattern accepted\n");
        return 1;
    }
    printf("patchsel %s psnr %.2f\n", ps_version(), db);
    return 0;
}
