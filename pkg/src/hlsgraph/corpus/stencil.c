// three-point smoothing filter
void stencil(int in[512], int out[512]) {
    sweep: for (int i = 1; i < 511; i++) {
        out[i] = in[i - 1] + 2 * in[i] + in[i + 1];
    }
}
