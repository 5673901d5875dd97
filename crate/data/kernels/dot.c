#define N 128

double dot(const double x[N], const double y[N]) {
  double acc = 0.0;
  for (int i = 0; i < N; i++) {
#pragma HLS PIPELINE II=1
    acc += x[i] * y[i];
  }
  return acc;
}
