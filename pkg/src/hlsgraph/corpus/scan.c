// running prefix sum; each iteration reads the previous output
void scan(int x[128], int y[128]) {
    y[0] = x[0];
    acc: for (int i = 1; i < 128; i++) {
        y[i] = y[i - 1] + x[i];
    }
}
