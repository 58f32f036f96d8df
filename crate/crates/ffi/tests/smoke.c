#include <stdio.h>
#include "phasewave.h"

int main(void) {
    const double freqs[] = {0.0, 5.0};
    const size_t layers[] = {1, 10, 1};
    PwAnsatz *a = NULL;
    PwStatus st = pw_ansatz_new(PW_FORM_REAL, 1, freqs, 2, layers, 3, 1.0, 7, &a);
    if (st != PW_STATUS_OK) {
        fprintf(stderr, "%s\n", pw_last_error_message());
        return 1;
    }
    double x = 0.5, re = 0.0, im = 0.0;
    st = pw_ansatz_eval(a, &x, 1, &re, &im);
    printf("%s T(0.5) = %g%+gi\n", pw_version(), re, im);
    pw_ansatz_free(a);
    return st == PW_STATUS_OK ? 0 : 1;
}
