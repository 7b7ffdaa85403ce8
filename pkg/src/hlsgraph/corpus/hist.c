// weighted histogram: data-dependent bin index
void hist(int feature[256], int weight[256], int bins[64]) {
    init: for (int b = 0; b < 64; b++) {
        bins[b] = 0;
    }
    accum: for (int i = 0; i < 256; i++) {
        bins[feature[i]] += weight[i] * 3;
    }
}
