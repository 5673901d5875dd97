#define M 8
#define K 8
#define P 8

void matmul(const double A[M][K], const double B[K][P], double C[M][P]) {
row:
  for (int i = 0; i < M; i++) {
  col:
    for (int j = 0; j < P; j++) {
#pragma HLS PIPELINE II=1
      double sum = 0.0;
    prod:
      for (int k = 0; k < K; k++) {
#pragma HLS UNROLL factor=4
        sum += A[i][k] * B[k][j];
      }
      C[i][j] = sum;
    }
  }
}
