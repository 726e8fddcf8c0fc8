#include <math.h>
#include <stdio.h>
#include "fibercavity.h"

int main(void) {
    FcConfig *cfg = NULL;
    if (fc_config_primary(&cfg) != FC_STATUS_OK) return 1;

    double zeta = 0.0;
    fc_config_derived(cfg, &zeta, NULL, NULL);
    if (fabs(zeta - 4.1) > 0.05) return 2;

    FcReadoutPoint p;
    if (fc_readout_probability(cfg, 1, &p) != FC_STATUS_OK) return 3;
    if (p.total <= 0.0 || p.total >= 1.0) return 4;

    if (fc_config_set(cfg, "pulses.energy_p_nj", "-1") != FC_STATUS_NON_PHYSICAL_PARAMETER) return 5;
    char msg[256];
    if (fc_last_error_message(msg, sizeof msg) == 0) return 6;

    FcObservables o;
    if (fc_predict(cfg, 1, &o) != FC_STATUS_OK) return 7;
    printf("g2_xc_hr=%.6f g2_ac=%.6f\n", o.g2_xc_hr, o.g2_ac_heralded);

    fc_config_free(cfg);
    return 0;
}
