void matvec(int A[32][32], int x[32], int y[32]) {
    row: for (int i = 0; i < 32; i++) {
        y[i] = 0;
        col: for (int j = 0; j < 32; j++) {
            y[i] += A[i][j] * x[j];
        }
    }
}
