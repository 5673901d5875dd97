#define N 64

void vadd(const float a[N], const float b[N], float c[N]) {
vadd_loop:
  for (int i = 0; i < N; i++) {
#pragma HLS PIPELINE II=1
    c[i] = a[i] + b[i];
  }
}
