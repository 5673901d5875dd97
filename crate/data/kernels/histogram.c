#define N 256
#define BINS 16

void histogram(const int data[N], int hist[BINS]) {
  for (int b = 0; b < BINS; b++)
    hist[b] = 0;
  for (int i = 0; i < N; i++) {
#pragma HLS PIPELINE II=2
    int v = data[i];
    if (v < 0)
      v = 0;
    if (v >= BINS)
      v = BINS - 1;
    hist[v]++;
  }
}
