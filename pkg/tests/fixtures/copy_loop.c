void copy(int a[4], int b[4]) {
    for (int i = 0; i < 4; i++) {
        b[i] = a[i];
    }
}
