#include "embedlab.h"
#include <stdio.h>
#include <math.h>

int main(void) {
    double inv = 0.7071067811865476;
    double a[2] = {inv, inv};
    double v = 0.0;
    if (embedlab_section_density(a, 2, 0.0, &v) != EMBEDLAB_STATUS_OK) {
        fprintf(stderr, "density failed: %s\n", embedlab_last_error_message());
        return 1;
    }
    if (fabs(v - 1.4142135623730951) > 1e-9) return 2;

    double pts[4] = {0.0, 0.0, 0.05, 0.05};
    EmbedlabPointSet *set = NULL;
    if (embedlab_pointset_new(pts, 2, 2, EMBEDLAB_NORM_L2, &set) != EMBEDLAB_STATUS_OK) return 3;
    EmbedlabChain *chain = NULL;
    if (embedlab_chain_build(set, EMBEDLAB_MODE_HILBERT, 1, &chain) != EMBEDLAB_STATUS_OK) {
        fprintf(stderr, "chain failed: %s\n", embedlab_last_error_message());
        return 4;
    }
    EmbedlabProbeMap *map = NULL;
    if (embedlab_probe_sample(chain, 2, 0.8, 0, 7, 0, &map) != EMBEDLAB_STATUS_OK) return 5;
    double img[2];
    double z[2] = {0.05, 0.05};
    if (embedlab_probe_apply(map, z, 2, img, 2) != EMBEDLAB_STATUS_OK) return 6;
    printf("version %s, density %.12f, image (%g, %g)\n", embedlab_version(), v, img[0], img[1]);
    embedlab_probe_free(map);
    embedlab_chain_free(chain);
    embedlab_pointset_free(set);
    return 0;
}
