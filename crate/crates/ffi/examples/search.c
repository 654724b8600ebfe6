/* Build an index over three chunks, search it, and fuse two rankings. */
#include <stdio.h>
#include "bmembed.h"

int main(void) {
    const char *ids[] = {"a", "b", "c"};
    const char *texts[] = {
        "the phx-121 pump impeller",
        "routine maintenance schedule",
        "pump seal replacement",
    };
    BmIndex *index = NULL;
    if (bm_index_build(ids, texts, 3, 1.2, 0.75, &index) != BM_STATUS_OK) {
        fprintf(stderr, "%s\n", bm_last_error());
        return 1;
    }
    BmHit hits[3];
    size_t n = 0;
    bm_index_search(index, "pump impeller", hits, 3, &n);
    for (size_t i = 0; i < n && i < 3; i++) {
        printf("%zu %s %.4f\n", i + 1, bm_index_chunk_id(index, hits[i].chunk), hits[i].score);
    }
    bm_index_free(index);

    const uint64_t first[] = {7, 3, 9};
    const uint64_t second[] = {3, 7};
    const uint64_t *rankings[] = {first, second};
    const size_t lens[] = {3, 2};
    BmFused fused[3];
    bm_rrf(rankings, lens, 2, 40.0, fused, 3, &n);
    printf("top fused id %llu\n", (unsigned long long)fused[0].id);
    return 0;
}
