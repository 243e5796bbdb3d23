/* Usage: recommend MODEL DATASET_DIR HOUR */
#include <stdio.h>
#include <stdlib.h>

#include "musical_moments.h"

int main(int argc, char **argv) {
    if (argc != 4) {
        fprintf(stderr, "usage: %s MODEL DATASET_DIR HOUR\n", argv[0]);
        return 2;
    }
    MmRecommender *rec = NULL;
    MmStatus status = mm_recommender_load(argv[1], argv[2], NULL, &rec);
    if (status != MM_STATUS_OK) {
        fprintf(stderr, "load failed (%d): %s\n", status, mm_last_error());
        return 1;
    }
    char *json = NULL;
    status = mm_recommend_json(rec, atoi(argv[3]), 20, 0.0, &json);
    if (status != MM_STATUS_OK) {
        fprintf(stderr, "recommend failed (%d): %s\n", status, mm_last_error());
        mm_recommender_free(rec);
        return 1;
    }
    puts(json);
    mm_string_free(json);
    mm_recommender_free(rec);
    return 0;
}
