#include <math.h>
#include <stdio.h>
#include "havok_ffi.h"

int main(void) {
    enum { N = 4000 };
    static double x[N];
    for (int k = 0; k < N; k++) {
        double t = k * 0.01;
        x[k] = 1.0 + 0.1 * sin(2.0 * t) + 0.05 * cos(5.3 * t) + (k >= 3000 && k < 3020 ? 0.8 : 0.0);
    }
    HvkDetectorParams params = hvk_detector_params_default();
    HvkDetector *det = NULL;
    if (hvk_detector_fit(x, N, 0.01, &params, &det) != HVK_STATUS_OK) {
        char msg[256];
        hvk_last_error_message(msg, sizeof msg);
        fprintf(stderr, "fit failed: %s\n", msg);
        return 1;
    }
    int flagged = 0;
    for (int k = 0; k < N; k++) {
        int ready, flag;
        double forcing;
        hvk_detector_push(det, x[k], &ready, &forcing, &flag);
        if (ready && flag && !flagged) {
            printf("first flag at sample %d\n", k);
            flagged = 1;
        }
    }
    hvk_detector_free(det);
    printf("havok %s\n", hvk_version());
    return flagged ? 0 : 1;
}
