// element-wise vector add
void vadd(int a[256], int b[256], int c[256]) {
    add: for (int i = 0; i < 256; i++) {
        c[i] = a[i] + b[i];
    }
}
