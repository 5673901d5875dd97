#define TSTEPS 10
#define N 32

void kernel_jacobi_1d(double A[N], double B[N]) {
  for (int t = 0; t < TSTEPS; t++) {
    for (int i = 1; i < N - 1; i++) {
#pragma HLS PIPELINE II=1
      B[i] = 0.33333 * (A[i - 1] + A[i] + A[i + 1]);
    }
    for (int i = 1; i < N - 1; i++) {
#pragma HLS PIPELINE II=1
      A[i] = 0.33333 * (B[i - 1] + B[i] + B[i + 1]);
    }
  }
}
