void gemm(int A[16][16], int B[16][16], int C[16][16]) {
    ii: for (int i = 0; i < 16; i++) {
        jj: for (int j = 0; j < 16; j++) {
            C[i][j] = 0;
            kk: for (int k = 0; k < 16; k++) {
                C[i][j] += A[i][k] * B[k][j];
            }
        }
    }
}
