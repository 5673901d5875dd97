int main(void) {
  static double A[8][8], B[8][8], C[8][8];
  hls_rng_seed(HLS_INPUT_SEED);
  for (int i = 0; i < 8; i++)
    for (int j = 0; j < 8; j++) {
      A[i][j] = hls_rng_f64();
      B[i][j] = hls_rng_f64();
    }
  {entry_symbol}(A, B, C);
  for (int i = 0; i < 8; i++)
    for (int j = 0; j < 8; j++)
      hls_print_f64(C[i][j]);
  return 0;
}
