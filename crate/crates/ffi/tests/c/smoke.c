#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "schauder.h"

#define CHECK(call)                                                     \
    do {                                                                \
        SchauderStatus s_ = (call);                                     \
        if (s_ != SCHAUDER_STATUS_OK) {                                 \
            char msg_[256];                                             \
            schauder_last_error(msg_, sizeof msg_, NULL);               \
            fprintf(stderr, "%s failed (%d): %s\n", #call, s_, msg_);   \
            return 1;                                                   \
        }                                                               \
    } while (0)

int main(void) {
    double mass = 0.0;
    CHECK(schauder_kernel_mass(1, 1.0, &mass));
    if (fabs(mass - 4.0) > 4e-3) return 2;

    SchauderFunction *f = NULL;
    CHECK(schauder_function_builtin("caloric_poly", 1, 0.5, &f));
    double x[1] = {0.2};
    double v = 0.0, mv = 0.0;
    CHECK(schauder_function_eval(f, x, 1, 0.3, &v));
    CHECK(schauder_mean_value(f, x, 1, 0.3, 0.5, &mv));
    if (fabs(v - mv) > 1e-3) return 3;

    SchauderMollifier *m = NULL;
    CHECK(schauder_mollifier_new(1, 33, &m));
    size_t axes[2] = {0, 0};
    double d2 = 0.0;
    CHECK(schauder_mollify_at(m, f, 0.1, axes, 2, 0, x, 1, 0.3, &d2));
    if (fabs(d2 - 2.0) > 1e-9) return 4;

    double bad = 0.0;
    if (schauder_scaling_integral(2, 2, 1.0, 1, &bad) != SCHAUDER_STATUS_DIVERGENT) return 5;

    SchauderConfig *cfg = NULL;
    CHECK(schauder_config_new(1, 0.5, 7, &cfg));
    SchauderReport *r = NULL;
    CHECK(schauder_check_run(cfg, "kernel_mass", &r));
    bool passed = false;
    CHECK(schauder_report_passed(r, &passed));
    size_t need = 0;
    schauder_report_json(r, NULL, 0, &need);
    char *json = (char *)malloc(need);
    CHECK(schauder_report_json(r, json, need, &need));
    int ok = passed && strstr(json, "\"kernel_mass\"") != NULL;
    printf("%s %s\n", schauder_version(), ok ? "ok" : "bad");

    free(json);
    schauder_report_free(r);
    schauder_config_free(cfg);
    schauder_mollifier_free(m);
    schauder_function_free(f);
    return ok ? 0 : 6;
}
