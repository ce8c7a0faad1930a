/* Solves the manufactured 32x16 instance with the event-triggered policy and
 * prints the outcome. Exits non-zero on any failure. */
#include <stdio.h>
#include <stdlib.h>

#include "etpoisson.h"

static int check(EtpStatus s, const char *what) {
    if (s != ETP_STATUS_OK) {
        const char *msg = etp_last_error_message();
        fprintf(stderr, "%s failed with %d: %s\n", what, (int)s, msg ? msg : "(none)");
        return 1;
    }
    return 0;
}

int main(void) {
    EtpInstance *inst = NULL;
    EtpConfig *cfg = NULL;
    EtpReport *report = NULL;
    int rc = 1;

    if (check(etp_instance_manufactured(32, 16, &inst), "instance")) goto done;
    if (check(etp_config_new(&cfg), "config")) goto done;
    if (check(etp_config_set_pes(cfg, 4), "pes")) goto done;
    if (check(etp_config_set_event(cfg, 200.0, 0.8, 200), "event")) goto done;
    if (check(etp_run(inst, cfg, &report), "run")) goto done;

    double residual = 0.0;
    uint64_t messages = 0, vt = 0;
    size_t needed = 0;
    if (check(etp_report_final_residual(report, &residual), "residual")) goto done;
    if (check(etp_report_total_halo_messages(report, &messages), "messages")) goto done;
    if (check(etp_report_virtual_time(report, &vt), "virtual time")) goto done;
    if (etp_report_solution(report, NULL, 0, &needed) != ETP_STATUS_BUFFER_TOO_SMALL) goto done;
    double *p = malloc(needed * sizeof(double));
    if (check(etp_report_solution(report, p, needed, &needed), "solution")) { free(p); goto done; }
    free(p);

    printf("etpoisson %s passed=%d residual=%.3e halo=%llu vt=%llu cells=%zu\n", etp_version(),
           (int)etp_report_passed(report), residual, (unsigned long long)messages,
           (unsigned long long)vt, needed);
    rc = etp_report_passed(report) ? 0 : 1;

done:
    etp_report_free(report);
    etp_config_free(cfg);
    etp_instance_free(inst);
    return rc;
}
