#define N 8
#define M 6

void kernel_syrk(double alpha, double beta, double C[N][N], const double A[N][M]) {
  for (int i = 0; i < N; i++) {
    for (int j = 0; j <= i; j++)
      C[i][j] *= beta;
    for (int k = 0; k < M; k++) {
#pragma ACCEL PIPELINE auto{__PIPE__L1}
#pragma ACCEL TILE FACTOR=auto{__TILE__L1}
      for (int j = 0; j <= i; j++) {
#pragma ACCEL PARALLEL FACTOR=auto{__PARA__L2}
        C[i][j] += alpha * A[i][k] * A[j][k];
      }
    }
  }
}
